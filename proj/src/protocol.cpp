#include "carve/protocol.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "carve/core_model.hpp"
#include "carve/csv.hpp"
#include "carve/errors.hpp"

namespace carve {

std::string serialize_summary(const StudySummary& summary) {
    const auto violations = validate_summary(summary);
    if (!violations.empty()) {
        std::string msg = "refusing to serialize an invalid summary:";
        for (const auto& v : violations) msg += " " + v + ";";
        throw DataError(msg);
    }

    nlohmann::ordered_json j;
    j["format_version"] = summary.format_version;
    j["study_id"] = summary.study_id;
    j["n"] = summary.moments.n;
    j["p"] = summary.p;
    j["s"] = summary.s;
    j["selected"] = summary.selection.selected;
    j["lambda"] = std::vector<double>(summary.selection.lambda.data(),
                                      summary.selection.lambda.data() + summary.selection.lambda.size());
    j["signs"] = std::vector<int>();
    for (Eigen::Index k = 0; k < summary.selection.signs.size(); ++k) {
        j["signs"].push_back(summary.selection.signs[k] > 0.0 ? 1 : -1);
    }
    j["xi"] = std::vector<double>(summary.moments.xi.data(),
                                  summary.moments.xi.data() + summary.moments.xi.size());
    std::vector<double> xi_mat;
    xi_mat.reserve(static_cast<size_t>(summary.moments.Xi.size()));
    for (Eigen::Index i = 0; i < summary.moments.Xi.rows(); ++i) {
        for (Eigen::Index c = 0; c < summary.moments.Xi.cols(); ++c) {
            xi_mat.push_back(summary.moments.Xi(i, c));
        }
    }
    j["Xi"] = xi_mat;
    return j.dump(2) + "\n";
}

StudySummary deserialize_summary(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("cannot parse summary: ") + e.what());
    }

    StudySummary out;
    try {
        out.format_version = j.at("format_version").get<int>();
        if (out.format_version != 1) {
            throw DataError("unsupported summary format_version " +
                            std::to_string(out.format_version));
        }
        out.study_id = j.at("study_id").get<std::string>();
        out.moments.n = j.at("n").get<long>();
        out.p = j.at("p").get<int>();
        out.s = j.at("s").get<int>();
        out.selection.selected = j.at("selected").get<std::vector<int>>();

        const auto lambda = j.at("lambda").get<std::vector<double>>();
        out.selection.lambda = Eigen::Map<const Eigen::VectorXd>(
            lambda.data(), static_cast<Eigen::Index>(lambda.size()));
        const auto signs = j.at("signs").get<std::vector<double>>();
        out.selection.signs = Eigen::Map<const Eigen::VectorXd>(
            signs.data(), static_cast<Eigen::Index>(signs.size()));
        const auto xi = j.at("xi").get<std::vector<double>>();
        out.moments.xi =
            Eigen::Map<const Eigen::VectorXd>(xi.data(), static_cast<Eigen::Index>(xi.size()));

        const auto xi_mat = j.at("Xi").get<std::vector<double>>();
        const Eigen::Index dim = out.moments.xi.size();
        if (static_cast<Eigen::Index>(xi_mat.size()) != dim * dim) {
            throw DataError("Xi length does not match xi dimension");
        }
        out.moments.Xi.resize(dim, dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            for (Eigen::Index c = 0; c < dim; ++c) {
                out.moments.Xi(i, c) = xi_mat[static_cast<size_t>(i * dim + c)];
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("summary missing or malformed field: ") + e.what());
    }

    const auto violations = validate_summary(out);
    if (!violations.empty()) {
        std::string msg = "summary failed validation:";
        for (const auto& v : violations) msg += " " + v + ";";
        throw DataError(msg);
    }
    return out;
}

std::vector<int> union_design_request(const std::vector<StudySummary>& summaries) {
    if (summaries.empty()) return {};
    const int p = summaries.front().p;
    const int s = summaries.front().s;
    std::vector<bool> seen(static_cast<size_t>(p), false);
    for (const auto& summary : summaries) {
        if (summary.p != p || summary.s != s) {
            throw DataError("incompatible studies: summaries disagree on p or s");
        }
        for (int j : summary.selection.selected) seen[static_cast<size_t>(j)] = true;
    }
    std::vector<int> out;
    for (int j = 0; j < p; ++j) {
        if (seen[static_cast<size_t>(j)]) out.push_back(j);
    }
    return out;
}

AggregateResult aggregate(const std::vector<CarveFit>& fits, AggregateMode mode) {
    if (fits.empty()) throw DataError("nothing to aggregate");
    const Eigen::Index s = fits.front().alpha_carve.size();
    const Eigen::Index k = static_cast<Eigen::Index>(fits.size());

    AggregateResult out;
    out.per_study = fits;
    out.weights.resize(k);
    if (mode == AggregateMode::Simple) {
        out.weights.setConstant(1.0 / static_cast<double>(k));
    } else {
        double total = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            if (!(fits[static_cast<size_t>(i)].n_total > 0.0)) {
                throw DataError("size weighting requires positive sample counts");
            }
            total += fits[static_cast<size_t>(i)].n_total;
        }
        for (Eigen::Index i = 0; i < k; ++i) {
            out.weights[i] = fits[static_cast<size_t>(i)].n_total / total;
        }
    }

    out.alpha_tilde = Eigen::VectorXd::Zero(s);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto& fit = fits[static_cast<size_t>(i)];
        if (fit.alpha_carve.size() != s) {
            throw DataError("aggregation requires a common treatment dimension");
        }
        out.alpha_tilde += out.weights[i] * fit.alpha_carve;
    }

    // Lower bound on the variance improvement of the equal-weight average
    // over refit-only, from the per-study gains and their cross terms.
    double gain = 0.0;
    double cross = 0.0;
    const double kk = static_cast<double>(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto& fit_i = fits[static_cast<size_t>(i)];
        const double b_i = fit_i.efficiency_bound;
        const double v_i = fit_i.v_carve(0, 0);
        gain += b_i / (1.0 - b_i) * v_i;
        for (Eigen::Index l = i + 1; l < k; ++l) {
            const auto& fit_l = fits[static_cast<size_t>(l)];
            cross += (1.0 / std::sqrt((1.0 - b_i) * (1.0 - fit_l.efficiency_bound)) - 1.0) *
                     std::sqrt(v_i * fit_l.v_carve(0, 0));
        }
    }
    out.variance_lower_gain = (gain + 2.0 * cross) / (kk * kk);
    return out;
}

std::string aggregate_to_json(const AggregateResult& result) {
    nlohmann::ordered_json j;
    j["alpha_tilde"] = std::vector<double>(result.alpha_tilde.data(),
                                           result.alpha_tilde.data() + result.alpha_tilde.size());
    j["weights"] = std::vector<double>(result.weights.data(),
                                       result.weights.data() + result.weights.size());
    j["variance_lower_gain"] = result.variance_lower_gain;
    nlohmann::ordered_json studies = nlohmann::ordered_json::array();
    for (const auto& fit : result.per_study) {
        nlohmann::ordered_json item;
        item["study_id"] = fit.study_id;
        item["alpha_carve"] = std::vector<double>(fit.alpha_carve.data(),
                                                  fit.alpha_carve.data() + fit.alpha_carve.size());
        item["v_carve"] = fit.v_carve(0, 0);
        item["v_split"] = fit.v_split(0, 0);
        item["efficiency_bound"] = fit.efficiency_bound;
        item["r"] = fit.r;
        item["n_total"] = fit.n_total;
        studies.push_back(std::move(item));
    }
    j["per_study"] = std::move(studies);
    return j.dump(2) + "\n";
}

std::string aggregate_to_csv(const AggregateResult& result) {
    std::ostringstream out;
    out << "study_id,weight,alpha_carve,v_carve,v_split,efficiency_bound,r,n_total\n";
    for (size_t i = 0; i < result.per_study.size(); ++i) {
        const auto& fit = result.per_study[i];
        out << fit.study_id << ',' << format_double(result.weights[static_cast<Eigen::Index>(i)])
            << ',' << format_double(fit.alpha_carve[0]) << ',' << format_double(fit.v_carve(0, 0))
            << ',' << format_double(fit.v_split(0, 0)) << ','
            << format_double(fit.efficiency_bound) << ',' << format_double(fit.r) << ','
            << format_double(fit.n_total) << "\n";
    }
    out << "aggregate," << format_double(1.0) << ',' << format_double(result.alpha_tilde[0])
        << ",,,,,\n";
    return out.str();
}

}  // namespace carve
