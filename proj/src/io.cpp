#include "mmbm/io.hpp"

#include "mmbm/error.hpp"

#include <fmt/format.h>

#include <fstream>
#include <ostream>

namespace mmbm {

namespace {

template <typename T>
T required(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key)) throw Error(ErrorCode::ConfigError, fmt::format("model is missing \"{}\"", key));
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, fmt::format("model field \"{}\": {}", key, e.what()));
    }
}

}  // namespace

MmbmParams model_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "model must be a JSON object");
    std::vector<std::string> phases;
    if (doc.contains("phases")) {
        for (const auto& label : doc.at("phases")) {
            phases.push_back(label.is_string() ? label.get<std::string>() : label.dump());
        }
    }
    return validate_params(RawModel::from_variances(
        std::move(phases), required<std::vector<double>>(doc, "p"), required<std::vector<std::vector<double>>>(doc, "Q"),
        required<std::vector<double>>(doc, "mu"), required<std::vector<double>>(doc, "sigma2")));
}

MmbmParams load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, fmt::format("cannot open model file {}", path.string()));
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, fmt::format("{}: {}", path.string(), e.what()));
    }
    return model_from_json(doc);
}

nlohmann::json model_to_json(const MmbmParams& params) {
    const int m = params.size();
    nlohmann::json doc;
    doc["phases"] = params.phases;
    std::vector<double> p(params.p.data(), params.p.data() + m);
    std::vector<double> mu(params.mu.data(), params.mu.data() + m);
    std::vector<double> sigma2;
    std::vector<std::vector<double>> Q(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        sigma2.push_back(params.sigma(i) * params.sigma(i));
        for (int j = 0; j < m; ++j) Q[static_cast<std::size_t>(i)].push_back(params.Q(i, j));
    }
    doc["p"] = p;
    doc["Q"] = Q;
    doc["mu"] = mu;
    doc["sigma2"] = sigma2;
    return doc;
}

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

void write_ledger_csv(std::ostream& out, const EpochLedger& ledger, const PhaseSequence& phases,
                      const MmbmParams& params) {
    out << "epoch,layer,phase\n";
    for (std::size_t k = 0; k < ledger.size(); ++k) {
        out << format_double(ledger.epochs[k]) << ',' << ledger.layers[k] << ','
            << params.phases[static_cast<std::size_t>(phases.phase_at_epoch[k])] << '\n';
    }
}

void write_skeleton_csv(std::ostream& out, const CoupledBundle& bundle, const MmbmParams& params) {
    out << "epoch,layer,phase,value,interval_min\n";
    for (std::size_t k = 0; k < bundle.size(); ++k) {
        out << format_double(bundle.ledger.epochs[k]) << ',' << bundle.ledger.layers[k] << ','
            << params.phases[static_cast<std::size_t>(bundle.phases.phase_at_epoch[k])] << ','
            << format_double(bundle.r_at_epoch[k]) << ',' << format_double(bundle.interval_min[k]) << '\n';
    }
}

void write_path_csv(std::ostream& out, const SfpPath& path, const MmbmParams& params) {
    out << "t,value,state\n";
    for (std::size_t s = 0; s < path.states.size(); ++s) {
        const SfpState& st = path.states[s];
        out << format_double(path.times[s]) << ',' << format_double(path.values[s]) << ','
            << (st.up ? '+' : '-') << params.phases[static_cast<std::size_t>(st.phase)] << '\n';
    }
    if (!path.states.empty()) {
        const std::size_t last = path.times.size() - 1;
        out << format_double(path.times[last]) << ',' << format_double(path.values[last]) << ",-"
            << params.phases[static_cast<std::size_t>(path.final_phase)] << '\n';
    }
}

void write_matrix(std::ostream& out, const Matrix& a) {
    out << '[';
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        out << (i ? ", [" : "[");
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out << (j ? ", " : "") << format_double(a(i, j));
        }
        out << ']';
    }
    out << ']';
}

void write_passage_solution(std::ostream& out, const PassageSolution& sol, int indent) {
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    out << "{\n" << pad << "  \"n\": " << sol.n << ",\n" << pad << "  \"psi\": ";
    write_matrix(out, sol.psi);
    out << ",\n" << pad << "  \"u\": ";
    write_matrix(out, sol.u);
    out << ",\n"
        << pad << "  \"riccati_residual\": " << format_double(sol.riccati_residual) << ",\n"
        << pad << "  \"quadratic_residual\": " << format_double(sol.quadratic_residual) << ",\n"
        << pad << "  \"iterations\": " << sol.iterations << ",\n"
        << pad << "  \"converged\": " << (sol.converged ? "true" : "false") << "\n"
        << pad << '}';
}

}  // namespace mmbm
