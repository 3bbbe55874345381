#pragma once

// File formats: dataset CSV (x1..xd,y1..yp), JSON for polynomials, mixture
// parameters, fits, specs and selection results, dim-path CSV.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixreg/divergence.hpp"
#include "mixreg/model.hpp"
#include "mixreg/model_spec.hpp"
#include "mixreg/newton_em.hpp"
#include "mixreg/selection.hpp"
#include "mixreg/theory.hpp"

namespace mixreg {

using json = nlohmann::json;

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);
/// Full-string parse; throws FormatError.
double parse_double(const std::string& s);

void write_dataset_csv(std::ostream& os, const Dataset& data);
/// Throws FormatError on a malformed header, ragged rows or bad numbers.
Dataset read_dataset_csv(std::istream& is);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

json to_json(const PolyFn& f);
PolyFn polyfn_from_json(const json& j);

json to_json(const MixtureParams& params);
MixtureParams params_from_json(const json& j);

json to_json(const ModelSpec& spec);
/// Missing keys keep their defaults.
ModelSpec model_spec_from_json(const json& j);

json to_json(const FitResult& fit);
FitResult fit_result_from_json(const json& j);

json to_json(const SelectionResult& sel);
SelectionResult selection_result_from_json(const json& j);

json to_json(const DivergenceEstimate& est);
json to_json(const EntropyConstants& c);
json to_json(const BracketReport& r);

void write_dim_path_csv(std::ostream& os, const std::vector<DimPathPoint>& path);
/// Reads the (kappa, dimension) columns; K is left at 0 when absent.
std::vector<DimPathPoint> read_dim_path_csv(std::istream& is);

json load_json(const std::filesystem::path& path);
/// Writes indented JSON followed by a newline.
void save_json(const std::filesystem::path& path, const json& j);
void save_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mixreg
