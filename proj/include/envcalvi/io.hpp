#ifndef ENVCALVI_IO_HPP
#define ENVCALVI_IO_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "envcalvi/linalg.hpp"
#include "envcalvi/simgen.hpp"

namespace envcalvi {

// Plain numeric CSV, comma separated, row i = observation i. An optional
// single header row is auto-detected (first row non-numeric). Values are
// written with 17 significant digits so they round-trip bit-exactly.
Matrix read_csv(const std::string& path);
void write_csv(const std::string& path, const Matrix& m,
               const std::vector<std::string>& header = {});

std::string format_double(double v);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

// Ground-truth parameter records written by the simulators and read back by
// the fitting tools.
nlohmann::json response_truth_to_json(const ResponseEnvSpec& spec, Index n, std::uint64_t seed,
                                      const ResponseTruth& truth);
ResponseTruth response_truth_from_json(const nlohmann::json& j, ResponseEnvSpec* spec_out);
nlohmann::json predictor_truth_to_json(const PredictorEnvSpec& spec, Index n, std::uint64_t seed,
                                       const PredictorTruth& truth);
PredictorTruth predictor_truth_from_json(const nlohmann::json& j, PredictorEnvSpec* spec_out);

} // namespace envcalvi

#endif
