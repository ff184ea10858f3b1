#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "carve/types.hpp"

namespace carve {

// Monte Carlo configuration. Dimensions default to the large-scale layout
// (study k measures p_base + p_step*k covariates, the validation study 500);
// `small_profile()` switches to a light layout for quick runs.
struct SimConfig {
    int setting = 1;        // 1, 2 or 3
    int num_studies = 3;    // K
    double sigma_eps = 2.0;
    int n_val = 50;
    int n_study = 100;
    int reps = 200;
    std::uint64_t seed = 0;
    double lambda_mult = 0.7;  // penalty multiplier c
    int p_val = 500;
    int p_base = 400;
    int p_step = 20;
    int threads = 1;

    int study_p(int k) const { return p_base + p_step * (k + 1); }  // k is 0-based
    SimConfig& small_profile() {
        p_val = 150;
        p_base = 100;
        return *this;
    }
};

// Per-study outcome within one replication.
struct StudyOutcome {
    int q = 0;
    std::vector<int> selected;
    bool carve_ok = false;
    double alpha_carve = 0.0;
    double v_carve = 0.0;
    double v_split = 0.0;
    double efficiency_bound = 0.0;
    int newton_iters = 0;
    bool split_ok = false;
    double split_alpha = 0.0;
    double split_var = 0.0;
    bool pds_ok = false;
    double pds_alpha = 0.0;
    double pds_var = 0.0;
    std::string error;
};

struct ReplicationRecord {
    int rep_id = 0;
    std::vector<StudyOutcome> studies;
    bool pds_val_ok = false;
    double pds_val_alpha = 0.0;
    // Aggregated estimates; valid only when the matching flag is set.
    bool carved_ok = false;
    bool split_ok = false;
    bool pds_ok = false;
    double carved = 0.0;
    double split = 0.0;
    double pds = 0.0;
};

struct TableRow {
    int setting = 0;
    double sigma = 0.0;
    int num_studies = 0;
    std::string method;
    double mean_bias = 0.0;
    double median_bias = 0.0;
    double mean_mse = 0.0;
    double median_mse = 0.0;
    int n_fail = 0;
};

// Single-study, single-covariate experiment: selection on the existing half
// and exact carved correction against refit-only and double selection.
struct Figure2Config {
    int n_val = 100;
    int n_study = 50;
    double rho = 0.5;
    double sigma = 1.0;
    double alpha = 1.0;
    double lambda_mult = 1.0;
    bool half_ratio = false;  // force r = 1/2 by matching the study size to n_val
};

struct Figure2Result {
    std::vector<double> carved;
    std::vector<double> split;
    std::vector<double> pds;
    int discarded = 0;  // replications where nothing was selected
    double r = 0.0;
};

/// Draws the existing studies and the validation dataset for one
/// replication. Deterministic in rep_seed; returned data is uncentered.
std::pair<std::vector<Dataset>, Dataset> gen_setting(const SimConfig& config,
                                                     std::uint64_t rep_seed);

/// Full pipeline over all replications: selection and summary export per
/// study, carving against the validation data, both baselines, aggregation.
/// Method failures are recorded per replication, never dropped.
std::vector<ReplicationRecord> run_monte_carlo(const SimConfig& config);

/// Bias and squared-error statistics per method; medians use the midpoint
/// of the two central order statistics.
std::vector<TableRow> summarize_table(const std::vector<ReplicationRecord>& records,
                                      const SimConfig& config);

/// Collects `reps` replications conditioned on the covariate being
/// selected, discarding and counting the rest.
Figure2Result figure2_experiment(std::uint64_t seed, int reps,
                                 const Figure2Config& config = Figure2Config());

std::string table_to_csv(const std::vector<TableRow>& rows);
std::vector<TableRow> table_from_csv(const std::string& text);
std::string figure2_samples_to_csv(const Figure2Result& result);

double median_lower_midpoint(std::vector<double> values);

}  // namespace carve
