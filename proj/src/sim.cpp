#include "carve/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "carve/carve_engine.hpp"
#include "carve/comparators.hpp"
#include "carve/core_model.hpp"
#include "carve/csv.hpp"
#include "carve/errors.hpp"
#include "carve/lasso.hpp"
#include "carve/protocol.hpp"
#include "carve/rng.hpp"

namespace carve {

namespace {

void check_config(const SimConfig& config) {
    if (config.setting < 1 || config.setting > 3) throw DataError("setting must be 1, 2 or 3");
    if (config.num_studies < 1) throw DataError("need at least one study");
    if (config.reps < 1) throw DataError("need at least one replication");
    if (config.n_val < 2 || config.n_study < 2) throw DataError("sample sizes must be at least 2");
    if (!(config.sigma_eps > 0.0)) throw DataError("noise scale must be positive");
    if (!(config.lambda_mult > 0.0)) throw DataError("penalty multiplier must be positive");
    if (config.p_base < 5 || config.p_val < 5) throw DataError("covariate counts must cover the active set");
}

// Stationary AR(1) row with autocorrelation 0.5 and unit marginal variance.
void fill_ar_row(Rng& rng, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
    const double phi = 0.5;
    const double innov = std::sqrt(1.0 - phi * phi);
    double prev = rng.normal();
    row[0] = prev;
    for (Eigen::Index j = 1; j < row.size(); ++j) {
        prev = phi * prev + innov * rng.normal();
        row[j] = prev;
    }
}

Eigen::VectorXd active_coefficients(bool validation_shift) {
    Eigen::VectorXd beta(5);
    if (validation_shift) {
        beta << 1.5, 1.0, 1.0, 1.0, 0.0;
    } else {
        beta << 1.5, 1.0, 1.0, 1.0, 1.0;
    }
    return beta;
}

Dataset draw_dataset(Rng& rng, int setting, int n, int p, double sigma_eps,
                     const Eigen::VectorXd& beta, const std::string& id) {
    Dataset data;
    data.study_id = id;
    data.d.resize(n, 1);
    data.x.resize(n, p);

    if (setting == 1) {
        // Treatment and covariates jointly AR(1)-correlated; the treatment is
        // the leading coordinate of the chain.
        Eigen::MatrixXd chain(n, p + 1);
        for (int i = 0; i < n; ++i) fill_ar_row(rng, chain.row(i));
        data.d.col(0) = chain.col(0);
        data.x = chain.rightCols(p);
    } else {
        for (int i = 0; i < n; ++i) fill_ar_row(rng, data.x.row(i));
        // Treatment driven by two of the active covariates with small noise.
        const double sd_nu = std::sqrt(0.1);
        for (int i = 0; i < n; ++i) {
            data.d(i, 0) = data.x(i, 4) + data.x(i, 5) + sd_nu * rng.normal();
        }
    }

    data.y = data.d.col(0) + data.x.leftCols(beta.size()) * beta;
    for (int i = 0; i < n; ++i) data.y[i] += sigma_eps * rng.normal();
    return data;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = m.col(idx[static_cast<size_t>(j)]);
    return out;
}

// Double-selection penalty from the dependent variable's sample scale; at
// p = 1 the default formula's log term is floored at log 2.
Eigen::VectorXd pds_weights(const Dataset& data, const Eigen::VectorXd& dep, double c) {
    const double n = static_cast<double>(data.n());
    const double sd = std::sqrt(dep.squaredNorm() / (n - 1.0));
    if (data.p() >= 2) return default_lambda(data.n(), data.p(), sd, data.n(), c);
    const double level = c * std::sqrt(n) * sd * std::sqrt(2.0 * std::log(2.0) / n);
    return Eigen::VectorXd::Constant(data.p(), level);
}

}  // namespace

std::pair<std::vector<Dataset>, Dataset> gen_setting(const SimConfig& config,
                                                     std::uint64_t rep_seed) {
    check_config(config);
    Rng rng(rep_seed);

    const Eigen::VectorXd beta = active_coefficients(false);
    std::vector<Dataset> studies;
    studies.reserve(static_cast<size_t>(config.num_studies));
    for (int k = 0; k < config.num_studies; ++k) {
        studies.push_back(draw_dataset(rng, config.setting, config.n_study, config.study_p(k),
                                       config.sigma_eps, beta,
                                       "study_" + std::to_string(k + 1)));
    }

    // The validation pool must cover every study's covariates, so its width
    // extends to the largest study when K pushes past the default.
    const int p_union = std::max(config.p_val, config.study_p(config.num_studies - 1));
    const Eigen::VectorXd beta_val = active_coefficients(config.setting == 3);
    Dataset validation = draw_dataset(rng, config.setting, config.n_val, p_union,
                                      config.sigma_eps, beta_val, "validation");
    return {std::move(studies), std::move(validation)};
}

std::vector<ReplicationRecord> run_monte_carlo(const SimConfig& config) {
    check_config(config);

    auto run_one = [&config](int rep) {
        ReplicationRecord rec;
        rec.rep_id = rep;

        std::uint64_t mix = static_cast<std::uint64_t>(rep);
        auto generated = gen_setting(config, config.seed ^ splitmix64_next(mix));
        std::vector<Dataset> studies = std::move(generated.first);
        Dataset validation = center_columns(generated.second);

        std::vector<CarveFit> carve_fits;
        bool all_carved = true;
        bool all_split = true;
        bool all_pds = true;
        double split_sum = 0.0;
        double pds_sum = 0.0;

        for (int k = 0; k < config.num_studies; ++k) {
            StudyOutcome so;
            const Dataset study = center_columns(studies[static_cast<size_t>(k)]);
            const double n_total = static_cast<double>(config.n_study + config.n_val);
            const double r = static_cast<double>(config.n_study) / n_total;

            SelectionSummary sel;
            bool have_selection = false;
            try {
                const Eigen::VectorXd lambda =
                    default_lambda(config.n_study, study.p(), config.sigma_eps,
                                   static_cast<long>(n_total), config.lambda_mult);
                const LassoFit fit = fit_weighted_lasso(study, lambda, r, n_total);
                sel = extract_selection(fit, lambda);
                have_selection = true;
                so.q = sel.q();
                so.selected = sel.selected;

                const StudySummary summary = make_study_summary(study, sel);
                CarveInput input{summary, validation.y, validation.d,
                                 columns(validation.x, sel.selected)};
                const CarveFit cf = carve_study(input);
                so.carve_ok = true;
                so.alpha_carve = cf.alpha_carve[0];
                so.v_carve = cf.v_carve(0, 0);
                so.v_split = cf.v_split(0, 0);
                so.efficiency_bound = cf.efficiency_bound;
                so.newton_iters = cf.newton_iters;
                carve_fits.push_back(cf);
            } catch (const Error& e) {
                so.error = e.what();
            }
            all_carved = all_carved && so.carve_ok;

            if (have_selection) {
                try {
                    const ComparatorFit split = split_estimate(
                        validation.y, validation.d, columns(validation.x, sel.selected), sel);
                    so.split_ok = true;
                    so.split_alpha = split.alpha[0];
                    so.split_var = split.variance(0, 0);
                    split_sum += so.split_alpha;
                } catch (const Error& e) {
                    if (so.error.empty()) so.error = e.what();
                }
            }
            all_split = all_split && so.split_ok;

            try {
                const ComparatorFit pds = post_double_selection(
                    study, pds_weights(study, study.y, config.lambda_mult),
                    pds_weights(study, study.d.col(0), config.lambda_mult));
                so.pds_ok = true;
                so.pds_alpha = pds.alpha[0];
                so.pds_var = pds.variance(0, 0);
                pds_sum += so.pds_alpha;
            } catch (const Error& e) {
                if (so.error.empty()) so.error = e.what();
            }
            all_pds = all_pds && so.pds_ok;

            rec.studies.push_back(std::move(so));
        }

        try {
            const ComparatorFit pds_val = post_double_selection(
                validation, pds_weights(validation, validation.y, config.lambda_mult),
                pds_weights(validation, validation.d.col(0), config.lambda_mult));
            rec.pds_val_ok = true;
            rec.pds_val_alpha = pds_val.alpha[0];
        } catch (const Error&) {
            rec.pds_val_ok = false;
        }

        const double kk = static_cast<double>(config.num_studies);
        if (all_carved) {
            const AggregateResult agg = aggregate(carve_fits, AggregateMode::Simple);
            rec.carved_ok = true;
            rec.carved = agg.alpha_tilde[0];
        }
        if (all_split) {
            rec.split_ok = true;
            rec.split = split_sum / kk;
        }
        if (all_pds && rec.pds_val_ok) {
            rec.pds_ok = true;
            rec.pds = (pds_sum + rec.pds_val_alpha) / (kk + 1.0);
        }
        return rec;
    };

    std::vector<ReplicationRecord> records(static_cast<size_t>(config.reps));
    const int threads = std::max(1, config.threads);
    if (threads == 1) {
        for (int rep = 0; rep < config.reps; ++rep) records[static_cast<size_t>(rep)] = run_one(rep);
    } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (int rep = next.fetch_add(1); rep < config.reps; rep = next.fetch_add(1)) {
                records[static_cast<size_t>(rep)] = run_one(rep);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return records;
}

double median_lower_midpoint(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[(n - 1) / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<TableRow> summarize_table(const std::vector<ReplicationRecord>& records,
                                      const SimConfig& config) {
    if (records.empty()) throw DataError("no replications to summarize");

    struct MethodSlot {
        const char* name;
        std::vector<double> bias;
        std::vector<double> sq;
        int n_fail = 0;
    };
    MethodSlot slots[3] = {{"carved", {}, {}, 0}, {"split", {}, {}, 0}, {"pds", {}, {}, 0}};

    for (const auto& rec : records) {
        const bool ok[3] = {rec.carved_ok, rec.split_ok, rec.pds_ok};
        const double est[3] = {rec.carved, rec.split, rec.pds};
        for (int m = 0; m < 3; ++m) {
            if (!ok[m]) {
                ++slots[m].n_fail;
                continue;
            }
            const double bias = est[m] - 1.0;
            slots[m].bias.push_back(bias);
            slots[m].sq.push_back(bias * bias);
        }
    }

    std::vector<TableRow> rows;
    for (auto& slot : slots) {
        TableRow row;
        row.setting = config.setting;
        row.sigma = config.sigma_eps;
        row.num_studies = config.num_studies;
        row.method = slot.name;
        row.n_fail = slot.n_fail;
        if (!slot.bias.empty()) {
            const double n = static_cast<double>(slot.bias.size());
            double mean_bias = 0.0, mean_sq = 0.0;
            for (double b : slot.bias) mean_bias += b;
            for (double v : slot.sq) mean_sq += v;
            row.mean_bias = mean_bias / n;
            row.mean_mse = mean_sq / n;
            row.median_bias = median_lower_midpoint(slot.bias);
            row.median_mse = median_lower_midpoint(slot.sq);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Figure2Result figure2_experiment(std::uint64_t seed, int reps, const Figure2Config& config) {
    if (reps < 100) throw DataError("the boxplot experiment needs at least 100 replications");
    if (!(std::abs(config.rho) < 1.0)) throw DataError("correlation must lie in (-1,1)");

    const int n_study = config.half_ratio ? config.n_val : config.n_study;
    const int n_val = config.n_val;
    const double n_total = static_cast<double>(n_study + n_val);
    const double r = static_cast<double>(n_study) / n_total;
    const double lambda_level = config.lambda_mult * std::sqrt(n_total) * config.sigma *
                                std::sqrt(2.0 * std::log(2.0) / static_cast<double>(n_study));
    const Eigen::VectorXd lambda = Eigen::VectorXd::Constant(1, lambda_level);
    const double cross = std::sqrt(1.0 - config.rho * config.rho);

    Figure2Result result;
    result.r = r;

    const long max_attempts = 500L * std::max(reps, 1);
    long attempts = 0;
    while (static_cast<int>(result.carved.size()) < reps) {
        if (attempts >= static_cast<long>(reps) && result.carved.empty()) {
            throw DataError("selection never occurred; lower the penalty multiplier");
        }
        if (attempts >= max_attempts) {
            throw SolverError("selection too rare to collect the requested replications");
        }
        Rng rng = Rng::for_replication(seed, static_cast<std::uint64_t>(attempts));
        ++attempts;

        auto draw = [&](int n, const std::string& id) {
            Dataset data;
            data.study_id = id;
            data.y.resize(n);
            data.d.resize(n, 1);
            data.x.resize(n, 1);
            for (int i = 0; i < n; ++i) {
                const double z1 = rng.normal();
                const double z2 = rng.normal();
                data.d(i, 0) = z1;
                data.x(i, 0) = config.rho * z1 + cross * z2;
                data.y[i] = config.alpha * z1 + config.sigma * rng.normal();
            }
            return center_columns(data);
        };

        const Dataset existing = draw(n_study, "existing");
        const Dataset validation = draw(n_val, "validation");

        const LassoFit fit = fit_weighted_lasso(existing, lambda, r, n_total);
        const SelectionSummary sel = extract_selection(fit, lambda);
        if (sel.q() == 0) {
            ++result.discarded;
            continue;
        }

        const StudySummary summary = make_study_summary(existing, sel);
        CarveInput input{summary, validation.y, validation.d, validation.x};
        const Eigen::VectorXd gamma = pooled_ls(input);
        result.carved.push_back(closed_form_carve_1d_at_ratio(
            gamma[0], gamma[1], config.rho, lambda_level, sel.signs[0], n_total, r));

        const ComparatorFit split = split_estimate(validation.y, validation.d, validation.x, sel);
        result.split.push_back(split.alpha[0]);

        const ComparatorFit pds_study = post_double_selection(
            existing, pds_weights(existing, existing.y, config.lambda_mult),
            pds_weights(existing, existing.d.col(0), config.lambda_mult));
        const ComparatorFit pds_val = post_double_selection(
            validation, pds_weights(validation, validation.y, config.lambda_mult),
            pds_weights(validation, validation.d.col(0), config.lambda_mult));
        result.pds.push_back(0.5 * (pds_study.alpha[0] + pds_val.alpha[0]));
    }
    return result;
}

std::string table_to_csv(const std::vector<TableRow>& rows) {
    std::ostringstream out;
    out << "setting,sigma,K,method,mean_bias,median_bias,mean_mse,median_mse,n_fail\n";
    for (const auto& row : rows) {
        out << row.setting << ',' << format_double(row.sigma) << ',' << row.num_studies << ','
            << row.method << ',' << format_double(row.mean_bias) << ','
            << format_double(row.median_bias) << ',' << format_double(row.mean_mse) << ','
            << format_double(row.median_mse) << ',' << row.n_fail << "\n";
    }
    return out.str();
}

std::vector<TableRow> table_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("table is empty");
    std::vector<TableRow> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 9) {
            throw DataError("table row " + std::to_string(lineno) + " is malformed");
        }
        TableRow row;
        row.setting = std::stoi(fields[0]);
        row.sigma = std::stod(fields[1]);
        row.num_studies = std::stoi(fields[2]);
        row.method = fields[3];
        row.mean_bias = std::stod(fields[4]);
        row.median_bias = std::stod(fields[5]);
        row.mean_mse = std::stod(fields[6]);
        row.median_mse = std::stod(fields[7]);
        row.n_fail = std::stoi(fields[8]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string figure2_samples_to_csv(const Figure2Result& result) {
    std::ostringstream out;
    out << "method,estimate\n";
    for (double v : result.carved) out << "carved," << format_double(v) << "\n";
    for (double v : result.split) out << "split," << format_double(v) << "\n";
    for (double v : result.pds) out << "pds," << format_double(v) << "\n";
    return out.str();
}

}  // namespace carve
