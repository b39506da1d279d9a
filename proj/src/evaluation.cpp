#include "htmd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "htmd/errors.hpp"

namespace htmd::metrics {

namespace {

double mean_square(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return acc / static_cast<double>(x.size());
}

double power_db(double ms) { return ms > 0.0 ? 10.0 * std::log10(ms) : -std::numeric_limits<double>::infinity(); }

}  // namespace

PesResult pes(std::span<const double> estimate, std::span<const double> reference, std::size_t frame_len,
              double floor_db) {
    if (estimate.size() != reference.size()) throw ShapeError("pes: estimate and reference lengths differ");
    if (frame_len == 0) throw ConfigError("pes: frame length must be positive");
    PesResult out;
    const std::size_t frames = reference.size() / frame_len;
    for (std::size_t f = 0; f < frames; ++f) {
        const auto ref = reference.subspan(f * frame_len, frame_len);
        if (!(power_db(mean_square(ref)) < floor_db)) continue;
        const auto est = estimate.subspan(f * frame_len, frame_len);
        out.frame_db.push_back(std::max(10.0 * std::log10(mean_square(est)), floor_db));
        out.frame_index.push_back(f);
    }
    if (!out.frame_db.empty()) {
        double acc = 0.0;
        for (double v : out.frame_db) acc += v;
        out.mean_db = acc / static_cast<double>(out.frame_db.size());
    }
    return out;
}

std::size_t vad_frame_length(std::size_t sample_rate, double frame_seconds) {
    const auto n = static_cast<std::size_t>(std::llround(frame_seconds * static_cast<double>(sample_rate)));
    if (n == 0) throw ConfigError("VAD frame is shorter than one sample");
    return n;
}

std::vector<bool> vad_labels(std::span<const double> signal, std::size_t sample_rate, double frame_seconds,
                             double threshold_db) {
    const std::size_t n = vad_frame_length(sample_rate, frame_seconds);
    std::vector<bool> labels;
    for (std::size_t start = 0; start + n <= signal.size(); start += n)
        labels.push_back(power_db(mean_square(signal.subspan(start, n))) >= threshold_db);
    return labels;
}

double vad_accuracy(const std::vector<bool>& estimate, const std::vector<bool>& reference) {
    if (estimate.size() != reference.size()) throw ShapeError("vad_accuracy: label sequences differ in length");
    if (estimate.empty()) throw ShapeError("vad_accuracy: no frames");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < estimate.size(); ++i) agree += estimate[i] == reference[i];
    return 100.0 * static_cast<double>(agree) / static_cast<double>(estimate.size());
}

std::vector<SegmentScores> segment_metrics(const std::string& song_id, std::span<const double> vocals,
                                           std::span<const double> accompaniment, std::span<const double> estimate,
                                           std::size_t sample_rate, const EvalConfig& cfg) {
    const std::size_t T = estimate.size();
    if (vocals.size() != T || accompaniment.size() != T)
        throw ShapeError("segment_metrics: signals for '" + song_id + "' differ in length");
    const auto seg_len = static_cast<std::size_t>(std::llround(cfg.seg_seconds * static_cast<double>(sample_rate)));
    if (seg_len == 0 || T < seg_len)
        throw ShapeError("segment_metrics: '" + song_id + "' is shorter than one segment (" + std::to_string(T) +
                         " < " + std::to_string(seg_len) + " samples)");

    const PesResult song_pes = pes(estimate, vocals, cfg.pes_frame, cfg.pes_floor_db);
    const std::size_t count = T / seg_len;
    std::vector<SegmentScores> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        SegmentScores& s = out[k];
        s.song_id = song_id;
        s.segment = k;
        const auto v = vocals.subspan(k * seg_len, seg_len);
        const auto a = accompaniment.subspan(k * seg_len, seg_len);
        const auto e = estimate.subspan(k * seg_len, seg_len);
        s.is_silent = power_db(mean_square(v)) < cfg.silent_threshold_db;
        if (!s.is_silent) {
            const BssResult r = bss_eval(v, a, e, std::min(cfg.filter_len, seg_len));
            s.sdr = r.sdr;
            s.sir = r.sir;
            s.sar = r.sar;
            if (!r.defined()) s.is_silent = true;
        }
        const auto ref_vad = vad_labels(v, sample_rate, cfg.vad_frame_seconds, cfg.vad_threshold_db);
        const auto est_vad = vad_labels(e, sample_rate, cfg.vad_frame_seconds, cfg.vad_threshold_db);
        std::size_t active = 0, agree = 0;
        for (std::size_t i = 0; i < ref_vad.size(); ++i) {
            active += ref_vad[i];
            s.vad_frame_correct.push_back(ref_vad[i] == est_vad[i]);
            agree += ref_vad[i] == est_vad[i];
        }
        if (!ref_vad.empty()) s.vad_correct = static_cast<double>(agree) / static_cast<double>(ref_vad.size());
        s.near_silent = s.is_silent || static_cast<double>(active) <
                                           cfg.near_silent_fraction * static_cast<double>(ref_vad.size());
    }
    for (std::size_t i = 0; i < song_pes.frame_db.size(); ++i) {
        const std::size_t seg = song_pes.frame_index[i] * cfg.pes_frame / seg_len;
        if (seg < count) out[seg].pes_frames.push_back(song_pes.frame_db[i]);
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ShapeError("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    const double lo = values[n / 2 - 1], hi = values[n / 2];
    if (lo == hi) return lo;
    // -inf and +inf straddling the middle have no midpoint; report the lower one.
    if (std::isinf(lo) && std::isinf(hi)) return lo;
    return 0.5 * (lo + hi);
}

namespace {

MetricSummary summarize(const std::vector<SegmentScores>& segments, std::optional<double> SegmentScores::*field) {
    MetricSummary s;
    std::map<std::string, std::vector<double>> by_song;
    std::vector<double> pooled;
    double acc = 0.0;
    std::size_t finite = 0;
    for (const auto& seg : segments) {
        const auto& v = seg.*field;
        if (!v) continue;
        by_song[seg.song_id].push_back(*v);
        pooled.push_back(*v);
        if (std::isfinite(*v)) {
            acc += *v;
            ++finite;
        } else if (*v > 0) {
            ++s.pos_inf;
        } else {
            ++s.neg_inf;
        }
    }
    s.defined = pooled.size();
    if (pooled.empty()) return s;
    std::vector<double> song_medians;
    for (auto& [id, vals] : by_song) song_medians.push_back(median(vals));
    s.song_median = median(song_medians);
    s.segment_median = median(pooled);
    s.segment_mean = finite ? acc / static_cast<double>(finite) : std::numeric_limits<double>::quiet_NaN();
    return s;
}

}  // namespace

MetricReport aggregate(const std::vector<SegmentScores>& segments) {
    if (segments.empty()) throw ShapeError("aggregate: no segments");
    MetricReport r;
    r.sdr = summarize(segments, &SegmentScores::sdr);
    if (r.sdr.defined == 0) throw NumericFault("aggregate: every segment is undefined (silent reference)");
    r.sir = summarize(segments, &SegmentScores::sir);
    r.sar = summarize(segments, &SegmentScores::sar);
    std::map<std::string, int> songs;
    double pes_acc = 0.0;
    std::size_t correct = 0;
    for (const auto& s : segments) {
        songs[s.song_id] = 1;
        ++r.segments;
        r.silent_segments += s.is_silent;
        r.near_silent_segments += s.near_silent;
        for (double v : s.pes_frames) pes_acc += v;
        r.pes_frames += s.pes_frames.size();
        for (bool c : s.vad_frame_correct) correct += c;
        r.vad_frames += s.vad_frame_correct.size();
    }
    r.songs = songs.size();
    if (r.pes_frames) r.pes_mean_db = pes_acc / static_cast<double>(r.pes_frames);
    if (r.vad_frames) r.vad_percent = 100.0 * static_cast<double>(correct) / static_cast<double>(r.vad_frames);
    return r;
}

}  // namespace htmd::metrics
