#include "envcalvi/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace envcalvi {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

bool parse_double(const std::string& s, double& out) {
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream iss(line);
    while (std::getline(iss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

Matrix read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("read_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    size_t ncols = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        std::vector<double> row(fields.size());
        bool numeric = true;
        for (size_t i = 0; i < fields.size(); ++i) {
            if (!parse_double(fields[i], row[i])) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (first) {
                first = false; // header row
                continue;
            }
            throw InputError("read_csv: non-numeric data row in " + path);
        }
        first = false;
        if (ncols == 0) {
            ncols = row.size();
        } else if (row.size() != ncols) {
            throw InputError("read_csv: ragged rows in " + path);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError("read_csv: no data rows in " + path);
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(ncols));
    for (size_t i = 0; i < rows.size(); ++i) {
        for (size_t j = 0; j < ncols; ++j) {
            m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
        }
    }
    return m;
}

void write_csv(const std::string& path, const Matrix& m,
               const std::vector<std::string>& header) {
    std::ofstream out(path);
    if (!out) throw InputError("write_csv: cannot open " + path);
    if (!header.empty()) {
        if (static_cast<Index>(header.size()) != m.cols()) {
            throw InputError("write_csv: header size mismatch");
        }
        for (size_t j = 0; j < header.size(); ++j) {
            out << (j ? "," : "") << header[j];
        }
        out << "\n";
    }
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << format_double(m(i, j));
        }
        out << "\n";
    }
    if (!out) throw InputError("write_csv: write failed for " + path);
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw InputError("matrix_from_json: expected array");
    const Index rows = static_cast<Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    const Index cols = static_cast<Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& row = j.at(static_cast<size_t>(i));
        if (static_cast<Index>(row.size()) != cols) {
            throw InputError("matrix_from_json: ragged rows");
        }
        for (Index k = 0; k < cols; ++k) m(i, k) = row.at(static_cast<size_t>(k)).get<double>();
    }
    return m;
}

nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Vector vector_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw InputError("vector_from_json: expected array");
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = j.at(static_cast<size_t>(i)).get<double>();
    return v;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("write_json: cannot open " + path);
    out << j.dump(2) << "\n";
    if (!out) throw InputError("write_json: write failed for " + path);
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("read_json: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw InputError("read_json: parse error in " + path + ": " + e.what());
    }
    return j;
}

nlohmann::json response_truth_to_json(const ResponseEnvSpec& spec, Index n, std::uint64_t seed,
                                      const ResponseTruth& truth) {
    nlohmann::json j;
    j["schema"] = "envcalvi/1";
    j["model"] = "response";
    j["r"] = spec.r;
    j["p"] = spec.p;
    j["u"] = spec.u;
    j["n"] = n;
    j["seed"] = seed;
    j["mu"] = vector_to_json(truth.params.mu);
    j["eta"] = matrix_to_json(truth.params.eta);
    j["omega"] = matrix_to_json(truth.params.Omega);
    j["omega0"] = matrix_to_json(truth.params.Omega0);
    j["A"] = matrix_to_json(truth.params.A);
    j["beta"] = matrix_to_json(truth.beta);
    return j;
}

ResponseTruth response_truth_from_json(const nlohmann::json& j, ResponseEnvSpec* spec_out) {
    if (j.value("model", "") != std::string("response")) {
        throw InputError("response_truth_from_json: not a response truth record");
    }
    if (spec_out) {
        spec_out->r = j.at("r").get<Index>();
        spec_out->p = j.at("p").get<Index>();
        spec_out->u = j.at("u").get<Index>();
    }
    ResponseTruth out;
    out.params.mu = vector_from_json(j.at("mu"));
    out.params.eta = matrix_from_json(j.at("eta"));
    out.params.Omega = matrix_from_json(j.at("omega"));
    out.params.Omega0 = matrix_from_json(j.at("omega0"));
    out.params.A = matrix_from_json(j.at("A"));
    out.beta = matrix_from_json(j.at("beta"));
    return out;
}

nlohmann::json predictor_truth_to_json(const PredictorEnvSpec& spec, Index n, std::uint64_t seed,
                                       const PredictorTruth& truth) {
    nlohmann::json j;
    j["schema"] = "envcalvi/1";
    j["model"] = "predictor";
    j["r"] = spec.r;
    j["p"] = spec.p;
    j["m"] = spec.m;
    j["n"] = n;
    j["seed"] = seed;
    j["mu_x"] = vector_to_json(truth.mu_x);
    j["mu_y"] = vector_to_json(truth.mu_y);
    j["eta"] = matrix_to_json(truth.eta);
    j["A"] = matrix_to_json(truth.A);
    j["omega1"] = matrix_to_json(truth.omega1);
    j["omega0"] = matrix_to_json(truth.omega0);
    j["sigma"] = matrix_to_json(truth.sigma);
    j["beta"] = matrix_to_json(truth.beta);
    return j;
}

PredictorTruth predictor_truth_from_json(const nlohmann::json& j, PredictorEnvSpec* spec_out) {
    if (j.value("model", "") != std::string("predictor")) {
        throw InputError("predictor_truth_from_json: not a predictor truth record");
    }
    if (spec_out) {
        spec_out->r = j.at("r").get<Index>();
        spec_out->p = j.at("p").get<Index>();
        spec_out->m = j.at("m").get<Index>();
    }
    PredictorTruth out;
    out.mu_x = vector_from_json(j.at("mu_x"));
    out.mu_y = vector_from_json(j.at("mu_y"));
    out.eta = matrix_from_json(j.at("eta"));
    out.A = matrix_from_json(j.at("A"));
    out.omega1 = matrix_from_json(j.at("omega1"));
    out.omega0 = matrix_from_json(j.at("omega0"));
    out.sigma = matrix_from_json(j.at("sigma"));
    out.beta = matrix_from_json(j.at("beta"));
    return out;
}

} // namespace envcalvi
