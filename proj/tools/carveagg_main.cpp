#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "carve/carve_engine.hpp"
#include "carve/comparators.hpp"
#include "carve/core_model.hpp"
#include "carve/csv.hpp"
#include "carve/errors.hpp"
#include "carve/lasso.hpp"
#include "carve/protocol.hpp"
#include "carve/sim.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSolver = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw carve::DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw carve::DataError("cannot write file: " + path);
    out << text;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = m.col(idx[static_cast<size_t>(j)]);
    return out;
}

struct SummarizeArgs {
    std::string data_path;
    double sigma = 1.0;
    double lambda_mult = 1.0;
    double r = 0.5;
    double n_total = 0.0;
    std::string out_path;
    std::string study_id;
    std::string diagnostics_path;
};

void run_summarize(const SummarizeArgs& args) {
    carve::Dataset raw = carve::read_dataset_csv_file(args.data_path);
    if (!args.study_id.empty()) raw.study_id = args.study_id;
    const carve::Dataset data = carve::center_columns(raw);

    const Eigen::VectorXd lambda = carve::default_lambda(
        data.n(), data.p(), args.sigma, static_cast<long>(args.n_total), args.lambda_mult);
    const carve::LassoFit fit = carve::fit_weighted_lasso(data, lambda, args.r, args.n_total);
    const carve::SelectionSummary sel = carve::extract_selection(fit, lambda);
    const carve::StudySummary summary = carve::make_study_summary(data, sel);
    write_file(args.out_path, carve::serialize_summary(summary));

    if (!args.diagnostics_path.empty()) {
        const auto kkt = carve::kkt_residual(fit, data, lambda, args.r, args.n_total);
        nlohmann::ordered_json diag;
        diag["study_id"] = summary.study_id;
        diag["q"] = sel.q();
        diag["selected"] = sel.selected;
        diag["kkt_active_residual"] = kkt.first;
        diag["kkt_inactive_slack"] = kkt.second;
        diag["objective"] = fit.objective;
        diag["sweeps"] = fit.sweeps;
        diag["sigma_residual"] = carve::estimate_sigma(data, fit);
        write_file(args.diagnostics_path, diag.dump(2) + "\n");
    }
    std::cout << "summary for '" << summary.study_id << "' written to " << args.out_path
              << " (q = " << sel.q() << ")\n";
}

void run_carve(const std::string& summary_path, const std::string& validation_path,
               const std::string& out_path) {
    const carve::StudySummary summary = carve::deserialize_summary(read_file(summary_path));
    const carve::Dataset validation = carve::center_columns(
        carve::read_dataset_csv_file(validation_path));

    if (validation.s() != summary.s) {
        throw carve::DataError("treatment dimension mismatch between summary and validation data");
    }
    for (int j : summary.selection.selected) {
        if (j >= validation.p()) {
            throw carve::DataError(
                "covariate dimension mismatch: summary selects column " + std::to_string(j) +
                " but the validation data has only " + std::to_string(validation.p()) +
                " covariates");
        }
    }

    carve::CarveInput input{summary, validation.y, validation.d,
                            columns(validation.x, summary.selection.selected)};
    const carve::CarveFit fit = carve::carve_study(input);
    write_file(out_path, carve::carve_fit_to_json(fit));
    std::cout << "carved estimate for '" << summary.study_id
              << "': " << carve::format_double(fit.alpha_carve[0]) << "\n";
}

void run_aggregate(const std::vector<std::string>& fit_paths, const std::string& weights,
                   const std::string& out_path) {
    std::vector<carve::CarveFit> fits;
    fits.reserve(fit_paths.size());
    for (const auto& path : fit_paths) fits.push_back(carve::carve_fit_from_json(read_file(path)));

    carve::AggregateMode mode = carve::AggregateMode::Simple;
    if (weights == "size") {
        mode = carve::AggregateMode::SizeWeighted;
    } else if (weights != "simple") {
        throw carve::DataError("unknown weighting '" + weights + "' (use simple or size)");
    }
    const carve::AggregateResult result = carve::aggregate(fits, mode);
    write_file(out_path, carve::aggregate_to_json(result));

    std::filesystem::path csv_path(out_path);
    csv_path.replace_extension(".csv");
    write_file(csv_path.string(), carve::aggregate_to_csv(result));

    std::cout << "aggregate over " << fits.size()
              << " studies: " << carve::format_double(result.alpha_tilde[0]) << "\n";
}

struct SimulateArgs {
    int setting = 1;
    int num_studies = 3;
    double sigma = 2.0;
    int reps = 200;
    std::uint64_t seed = 0;
    double lambda_mult = 0.7;
    int n_val = 50;
    int n_study = 100;
    int threads = 0;
    bool small = false;
    bool figure2 = false;
    std::string out_path;
};

void run_simulate(const SimulateArgs& args) {
    const int threads =
        args.threads > 0 ? args.threads
                         : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    if (args.figure2) {
        carve::Figure2Config config;
        config.lambda_mult = args.lambda_mult;
        const carve::Figure2Result result = carve::figure2_experiment(args.seed, args.reps, config);
        write_file(args.out_path, carve::figure2_samples_to_csv(result));
        std::cout << "boxplot samples written to " << args.out_path << " (r = "
                  << carve::format_double(result.r) << ", discarded " << result.discarded
                  << " draws without selection)\n";
        return;
    }

    carve::SimConfig config;
    config.setting = args.setting;
    config.num_studies = args.num_studies;
    config.sigma_eps = args.sigma;
    config.reps = args.reps;
    config.seed = args.seed;
    config.lambda_mult = args.lambda_mult;
    config.n_val = args.n_val;
    config.n_study = args.n_study;
    config.threads = threads;
    if (args.small) config.small_profile();

    const auto records = carve::run_monte_carlo(config);
    const auto rows = carve::summarize_table(records, config);
    write_file(args.out_path, carve::table_to_csv(rows));

    std::cout << "note: the active coefficient vector is attached to the first five covariate"
                 " columns\n";
    std::cout << "table written to " << args.out_path << " (" << records.size()
              << " replications)\n";
}

void run_report(const std::string& in_path) {
    const auto rows = carve::table_from_csv(read_file(in_path));
    std::printf("%-8s %-6s %-4s %-8s %12s %12s %12s %12s %7s\n", "setting", "sigma", "K", "method",
                "mean_bias", "median_bias", "mean_mse", "median_mse", "n_fail");
    for (const auto& row : rows) {
        std::printf("%-8d %-6.3g %-4d %-8s %12.4f %12.4f %12.4f %12.4f %7d\n", row.setting,
                    row.sigma, row.num_studies, row.method.c_str(), row.mean_bias,
                    row.median_bias, row.mean_mse, row.median_mse, row.n_fail);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Carved treatment-effect estimation and summary aggregation"};
    app.require_subcommand(1);

    SummarizeArgs sum_args;
    auto* summarize = app.add_subcommand(
        "summarize", "Fit the selection stage on one study and export its summary file");
    summarize->add_option("--data", sum_args.data_path, "Study CSV (y,d1..ds,x1..xp)")
        ->required()
        ->check(CLI::ExistingFile);
    summarize->add_option("--sigma", sum_args.sigma, "Noise scale for the penalty level")
        ->required();
    summarize->add_option("--lambda-mult", sum_args.lambda_mult, "Penalty multiplier c");
    summarize->add_option("--r", sum_args.r, "Subsample ratio n / N")->required();
    summarize->add_option("--n-total", sum_args.n_total, "Combined sample count N")->required();
    summarize->add_option("--out", sum_args.out_path, "Output summary path")->required();
    summarize->add_option("--study-id", sum_args.study_id, "Identifier stored in the summary");
    summarize->add_option("--diagnostics", sum_args.diagnostics_path,
                          "Optional JSON report with stationarity diagnostics");

    std::string carve_summary, carve_validation, carve_out;
    auto* carve_cmd =
        app.add_subcommand("carve", "Combine one summary with validation data");
    carve_cmd->add_option("--summary", carve_summary, "Summary file")->required()
        ->check(CLI::ExistingFile);
    carve_cmd->add_option("--validation", carve_validation, "Validation CSV")->required()
        ->check(CLI::ExistingFile);
    carve_cmd->add_option("--out", carve_out, "Output fit report path")->required();

    std::vector<std::string> agg_fits;
    std::string agg_weights = "simple";
    std::string agg_out;
    auto* agg_cmd = app.add_subcommand("aggregate", "Average carved fits across studies");
    agg_cmd->add_option("--fits", agg_fits, "Fit report files")->required()->expected(-1);
    agg_cmd->add_option("--weights", agg_weights, "simple or size");
    agg_cmd->add_option("--out", agg_out, "Output JSON path (a CSV twin is written alongside)")
        ->required();

    SimulateArgs sim_args;
    auto* sim_cmd = app.add_subcommand("simulate", "Run the Monte Carlo study");
    sim_cmd->add_option("--setting", sim_args.setting, "Design setting")->check(CLI::Range(1, 3));
    sim_cmd->add_option("--k", sim_args.num_studies, "Number of existing studies");
    sim_cmd->add_option("--sigma", sim_args.sigma, "Response noise scale");
    sim_cmd->add_option("--reps", sim_args.reps, "Replication count");
    sim_cmd->add_option("--seed", sim_args.seed, "Base seed");
    sim_cmd->add_option("--lambda-mult", sim_args.lambda_mult, "Penalty multiplier c");
    sim_cmd->add_option("--n-val", sim_args.n_val, "Validation sample size");
    sim_cmd->add_option("--n-study", sim_args.n_study, "Per-study sample size");
    sim_cmd->add_option("--threads", sim_args.threads, "Worker threads (0 = all cores)")
        ->envname("CARVE_THREADS");
    sim_cmd->add_flag("--small", sim_args.small, "Light covariate dimensions for quick runs");
    sim_cmd->add_flag("--figure2", sim_args.figure2,
                      "Single-study boxplot experiment; writes per-method samples");
    sim_cmd->add_option("--out", sim_args.out_path, "Output CSV path")->required();

    std::string report_in;
    auto* report_cmd = app.add_subcommand("report", "Pretty-print a results table");
    report_cmd->add_option("--in", report_in, "table CSV")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "E:" << kExitUsage << ":" << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (summarize->parsed()) {
            run_summarize(sum_args);
        } else if (carve_cmd->parsed()) {
            run_carve(carve_summary, carve_validation, carve_out);
        } else if (agg_cmd->parsed()) {
            run_aggregate(agg_fits, agg_weights, agg_out);
        } else if (sim_cmd->parsed()) {
            run_simulate(sim_args);
        } else if (report_cmd->parsed()) {
            run_report(report_in);
        }
    } catch (const carve::SolverError& e) {
        std::cerr << "E:" << kExitSolver << ":" << e.what() << "\n";
        return kExitSolver;
    } catch (const carve::Error& e) {
        std::cerr << "E:" << kExitData << ":" << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "E:" << kExitSolver << ":unexpected: " << e.what() << "\n";
        return kExitSolver;
    }
    return 0;
}
