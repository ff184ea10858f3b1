#pragma once

#include <string>
#include <vector>

#include "carve/carve_engine.hpp"
#include "carve/types.hpp"

namespace carve {

enum class AggregateMode { Simple, SizeWeighted };

struct AggregateResult {
    Eigen::VectorXd alpha_tilde;      // s
    Eigen::VectorXd weights;          // K, positive, sums to 1
    std::vector<CarveFit> per_study;
    double variance_lower_gain = 0.0; // lower bound on the variance improvement
                                      // of the averaged estimate over refit-only
};

/// Fixed-order JSON with shortest round-trip float rendering; field order
/// format_version, study_id, n, p, s, selected, lambda, signs, xi, Xi
/// (row-major). Readers match by name, so reordered input is accepted.
std::string serialize_summary(const StudySummary& summary);

/// Parses and validates; rejects unknown format versions and any summary
/// violating the structural invariants.
StudySummary deserialize_summary(const std::string& text);

/// Sorted union of the selected sets; this is the covariate list the
/// validation study must collect. All summaries must agree on p and s.
std::vector<int> union_design_request(const std::vector<StudySummary>& summaries);

/// Weighted combination of the per-study carved estimates; simple mode uses
/// equal weights, size-weighted uses weights proportional to N_k.
AggregateResult aggregate(const std::vector<CarveFit>& fits, AggregateMode mode);

std::string aggregate_to_json(const AggregateResult& result);
std::string aggregate_to_csv(const AggregateResult& result);

constexpr const char* kSummaryFileExtension = ".carve-summary.json";

}  // namespace carve
