#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "htmd/evaluation.hpp"
#include "htmd/significance.hpp"

namespace htmd::metrics {

inline constexpr const char* kSegmentCsvVersion = "1";

// Columns are documented in docs/csv_schema.md.
std::string segments_csv(const std::vector<SegmentScores>& segments);
std::vector<SegmentScores> parse_segments_csv(const std::string& text);
std::vector<SegmentScores> read_segments_csv(const std::filesystem::path& path);

nlohmann::json report_json(const MetricReport& report);

struct MetricComparison {
    std::string metric;
    SignificanceResult result;
};

// Wilcoxon on sdr/sir/sar/pes (pairs defined in both tables), McNemar on per-frame
// VAD correctness. Tables must list the same (song, segment) keys in the same order.
std::vector<MetricComparison> compare_tables(const std::vector<SegmentScores>& a, const std::vector<SegmentScores>& b);
nlohmann::json comparisons_json(const std::vector<MetricComparison>& results, double alpha = 0.01);

}  // namespace htmd::metrics
