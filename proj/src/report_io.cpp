#include "htmd/report_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "htmd/errors.hpp"

namespace htmd::metrics {

using nlohmann::json;

namespace {

const char* kHeader = "song_id,segment,sdr,sir,sar,is_silent,near_silent,pes,pes_frames,vad_correct,vad_frames";

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::optional<double> parse_value(const std::string& s, std::size_t line) {
    if (s.empty()) return std::nullopt;
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DatasetError("segment CSV line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

json summary_json(const MetricSummary& s) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(fmt(v)); };
    return {{"song_median", num(s.song_median)},
            {"segment_median", num(s.segment_median)},
            {"segment_mean", num(s.segment_mean)},
            {"defined_segments", s.defined},
            {"pos_inf_segments", s.pos_inf},
            {"neg_inf_segments", s.neg_inf}};
}

}  // namespace

std::string segments_csv(const std::vector<SegmentScores>& segments) {
    std::ostringstream os;
    os << kHeader << '\n';
    for (const auto& s : segments) {
        if (s.song_id.find_first_of(",\n\"") != std::string::npos)
            throw DatasetError("song id '" + s.song_id + "' cannot be written to CSV");
        std::string pes_list, vad;
        for (std::size_t i = 0; i < s.pes_frames.size(); ++i) pes_list += (i ? ";" : "") + fmt(s.pes_frames[i]);
        for (bool c : s.vad_frame_correct) vad += c ? '1' : '0';
        os << s.song_id << ',' << s.segment << ',' << fmt(s.sdr) << ',' << fmt(s.sir) << ',' << fmt(s.sar) << ','
           << int(s.is_silent) << ',' << int(s.near_silent) << ',' << fmt(mean_of(s.pes_frames)) << ',' << pes_list
           << ',' << fmt(s.vad_correct) << ',' << vad << '\n';
    }
    return os.str();
}

std::vector<SegmentScores> parse_segments_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kHeader) throw DatasetError("segment CSV header does not match the schema");
    std::vector<SegmentScores> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 11)
            throw DatasetError("segment CSV line " + std::to_string(lineno) + ": expected 11 fields, got " +
                               std::to_string(f.size()));
        SegmentScores s;
        s.song_id = f[0];
        s.segment = static_cast<std::size_t>(parse_value(f[1], lineno).value_or(0));
        s.sdr = parse_value(f[2], lineno);
        s.sir = parse_value(f[3], lineno);
        s.sar = parse_value(f[4], lineno);
        s.is_silent = f[5] == "1";
        s.near_silent = f[6] == "1";
        if (!f[8].empty())
            for (const auto& p : split(f[8], ';')) s.pes_frames.push_back(parse_value(p, lineno).value());
        s.vad_correct = parse_value(f[9], lineno).value_or(0.0);
        for (char c : f[10]) {
            if (c != '0' && c != '1')
                throw DatasetError("segment CSV line " + std::to_string(lineno) + ": bad VAD frame string");
            s.vad_frame_correct.push_back(c == '1');
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<SegmentScores> read_segments_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_segments_csv(os.str());
}

json report_json(const MetricReport& r) {
    return {{"schema_version", kSegmentCsvVersion},
            {"songs", r.songs},
            {"segments", r.segments},
            {"silent_segments", r.silent_segments},
            {"near_silent_segments", r.near_silent_segments},
            {"sdr", summary_json(r.sdr)},
            {"sir", summary_json(r.sir)},
            {"sar", summary_json(r.sar)},
            {"pes_mean_db", r.pes_mean_db ? json(*r.pes_mean_db) : json(nullptr)},
            {"pes_frames", r.pes_frames},
            {"vad_percent", r.vad_percent},
            {"vad_frames", r.vad_frames}};
}

std::vector<MetricComparison> compare_tables(const std::vector<SegmentScores>& a, const std::vector<SegmentScores>& b) {
    if (a.size() != b.size())
        throw DatasetError("segment tables differ in length (" + std::to_string(a.size()) + " vs " +
                           std::to_string(b.size()) + ")");
    std::vector<bool> vad_a, vad_b;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].song_id != b[i].song_id || a[i].segment != b[i].segment)
            throw DatasetError("segment tables misaligned at row " + std::to_string(i + 1) + ": " + a[i].song_id +
                               "/" + std::to_string(a[i].segment) + " vs " + b[i].song_id + "/" +
                               std::to_string(b[i].segment));
        if (a[i].vad_frame_correct.size() != b[i].vad_frame_correct.size())
            throw DatasetError("VAD frame counts differ at row " + std::to_string(i + 1));
        vad_a.insert(vad_a.end(), a[i].vad_frame_correct.begin(), a[i].vad_frame_correct.end());
        vad_b.insert(vad_b.end(), b[i].vad_frame_correct.begin(), b[i].vad_frame_correct.end());
    }

    std::vector<MetricComparison> out;
    auto paired = [&](const char* name, auto get) {
        std::vector<double> x, y;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::optional<double> u = get(a[i]), v = get(b[i]);
            if (u && v) {
                x.push_back(*u);
                y.push_back(*v);
            }
        }
        if (x.empty()) {
            SignificanceResult r;
            r.test = "wilcoxon";
            r.method = "degenerate";
            out.push_back({name, r});
        } else {
            out.push_back({name, wilcoxon_signed_rank(x, y)});
        }
    };
    paired("sdr", [](const SegmentScores& s) { return s.sdr; });
    paired("sir", [](const SegmentScores& s) { return s.sir; });
    paired("sar", [](const SegmentScores& s) { return s.sar; });
    paired("pes", [](const SegmentScores& s) { return mean_of(s.pes_frames); });

    std::vector<std::pair<bool, bool>> frames;
    for (std::size_t i = 0; i < vad_a.size(); ++i) frames.emplace_back(vad_a[i], vad_b[i]);
    if (frames.empty()) {
        SignificanceResult r;
        r.test = "mcnemar";
        r.method = "degenerate";
        out.push_back({"vad", r});
    } else {
        out.push_back({"vad", mcnemar(frames)});
    }
    return out;
}

json comparisons_json(const std::vector<MetricComparison>& results, double alpha) {
    json arr = json::array();
    for (const auto& c : results)
        arr.push_back({{"metric", c.metric},
                       {"test", c.result.test},
                       {"statistic", c.result.statistic},
                       {"p_value", c.result.p_value},
                       {"n_effective", c.result.n_effective},
                       {"method", c.result.method},
                       {"significant", c.result.significant(alpha)}});
    return {{"alpha", alpha}, {"tests", arr}};
}

}  // namespace htmd::metrics
