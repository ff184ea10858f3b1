#pragma once

#include <optional>
#include <string>
#include <vector>

#include "carve/types.hpp"

namespace carve {

/// Subtracts the column mean from y and every column of d and x.
/// Requires n >= 2.
Dataset center_columns(const Dataset& data);

/// Moments of (d, x restricted to `model`) against y, scaled by 1/n.
/// The data must be centered and every index in [0, p).
MomentSummary compute_moment_summary(const Dataset& data, const std::vector<int>& model);
MomentSummary compute_moment_summary(const Dataset& data, const SelectionSummary& selection);

/// Checks every structural invariant of a summary. Returns one message per
/// violation; an empty list means the summary is well formed.
std::vector<std::string> validate_summary(const StudySummary& summary);

/// Fits the pieces together for export.
StudySummary make_study_summary(const Dataset& data, const SelectionSummary& selection);

// A participating site: either it retains raw data (and can recompute
// moments for any model, e.g. a union requested by the coordinator), or it
// kept only the exported summary and can serve exactly that.
class StudySite {
public:
    explicit StudySite(Dataset data, SelectionSummary selection);
    explicit StudySite(StudySummary summary);

    const StudySummary& summary() const { return summary_; }

    /// Moments for the requested model. Summary-only sites can serve only
    /// the model they originally exported; anything else raises
    /// CapabilityError.
    MomentSummary moments_for(const std::vector<int>& model) const;

private:
    std::optional<Dataset> raw_;
    StudySummary summary_;
};

}  // namespace carve
