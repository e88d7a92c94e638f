#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnsc/data.hpp"
#include "cnsc/eval.hpp"
#include "cnsc/hash.hpp"
#include "cnsc/trainer.hpp"

namespace cnsc {

/// Base64 of the little-endian IEEE-754 bytes; exact round-trip.
std::string encode_doubles(std::span<const double> v);
std::vector<double> decode_doubles(std::string_view s);

std::string read_text_file(const std::string& path);   // IoError on failure
void write_text_file(const std::string& path, std::string_view content);

/// Cohort CSV, header `x0..x{d-1},a,t,d[,z]`, doubles at 17 significant
/// digits. The label column only appears when explicitly requested.
void write_cohort_csv(const std::string& path, const Cohort& c,
                      bool with_labels);
/// Parse errors carry the 1-based line number (UserError).
Cohort read_cohort_csv(const std::string& path);

void save_ground_truth(const std::string& path, const GroundTruth& gt);
GroundTruth load_ground_truth(const std::string& path);

std::string train_report_json(const TrainReport& r);
std::string metric_report_json(const MetricReport& r);
std::string ksweep_json(const std::vector<KSweepEntry>& entries,
                        std::size_t selected_k);
void write_ksweep_csv(const std::string& path,
                      const std::vector<KSweepEntry>& entries);

/// Per-subgroup effect curves, wide CSV: t, est_g0.., true_g0.. (true columns
/// only when a truth curve is supplied per group).
void write_effect_curves_csv(const std::string& path,
                             const std::vector<EffectCurve>& est,
                             const std::vector<EffectCurve>& truth);

}  // namespace cnsc
