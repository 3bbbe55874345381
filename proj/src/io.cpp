#include "mixreg/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mixreg/errors.hpp"

namespace mixreg {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

// Column index of name "<prefix><k>", k >= 1, or 0 when the name does not match.
int column_number(const std::string& name, char prefix) {
    if (name.size() < 2 || name[0] != prefix) return 0;
    int k = 0;
    const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
    if (ec != std::errc{} || ptr != name.data() + name.size() || k < 1) return 0;
    return k;
}

template <class T>
T get(const json& j, const char* key) {
    if (!j.contains(key)) throw FormatError(std::string("missing JSON key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad JSON value for '") + key + "': " + e.what());
    }
}

// Reference into j; avoids dangling views over a temporary copy.
const json& member(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing JSON key '") + key + "'");
    return j.at(key);
}

json matrix_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
        rows.push_back(r);
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw FormatError("matrix must be a non-empty array of rows");
    const auto rows = j.size();
    const auto cols = j.front().size();
    Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw FormatError("ragged matrix in JSON");
        for (std::size_t k = 0; k < cols; ++k) {
            if (!j[i][k].is_number()) throw FormatError("matrix entries must be numbers");
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
        }
    }
    return M;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw FormatError("could not format number");
    return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
    const std::string t = trim(s);
    double v = 0.0;
    const char* first = t.data();
    if (!t.empty() && t[0] == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) throw FormatError("not a number: '" + s + "'");
    return v;
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
    std::string line;
    for (int j = 0; j < data.d(); ++j) line += (j ? ",x" : "x") + std::to_string(j + 1);
    for (int j = 0; j < data.p(); ++j) line += ",y" + std::to_string(j + 1);
    os << line << '\n';
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        line.clear();
        for (int j = 0; j < data.d(); ++j) {
            if (j) line += ',';
            line += format_double(data.x(i, j));
        }
        for (int j = 0; j < data.p(); ++j) {
            line += ',';
            line += format_double(data.y(i, j));
        }
        os << line << '\n';
    }
}

Dataset read_dataset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("dataset CSV is empty");
    const auto header = split(line, ',');
    std::vector<int> x_of, y_of;  // column -> position
    int d = 0, p = 0;
    for (const auto& raw : header) {
        const std::string name = trim(raw);
        if (const int k = column_number(name, 'x'); k > 0) {
            x_of.push_back(k);
            y_of.push_back(0);
            d = std::max(d, k);
        } else if (const int m = column_number(name, 'y'); m > 0) {
            x_of.push_back(0);
            y_of.push_back(m);
            p = std::max(p, m);
        } else {
            throw FormatError("unexpected dataset column '" + name + "'");
        }
    }
    const auto cx = std::count_if(x_of.begin(), x_of.end(), [](int k) { return k > 0; });
    const auto cy = std::count_if(y_of.begin(), y_of.end(), [](int k) { return k > 0; });
    if (d < 1 || p < 1 || cx != d || cy != p) throw FormatError("dataset header must name x1..xd and y1..yp exactly once");

    std::vector<std::vector<double>> rows;
    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) {
            throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                              " fields");
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            try {
                row[c] = parse_double(cells[c]);
            } catch (const FormatError& e) {
                throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError("dataset CSV has no rows");
    Dataset data;
    data.x.resize(static_cast<Eigen::Index>(rows.size()), d);
    data.y.resize(static_cast<Eigen::Index>(rows.size()), p);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            const auto ii = static_cast<Eigen::Index>(i);
            if (x_of[c] > 0) data.x(ii, x_of[c] - 1) = rows[i][c];
            else data.y(ii, y_of[c] - 1) = rows[i][c];
        }
    }
    try {
        data.validate();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(e.what());
    }
    return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
    std::ostringstream os;
    write_dataset_csv(os, data);
    save_text(path, os.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    return read_dataset_csv(in);
}

json to_json(const PolyFn& f) {
    json c = json::array();
    for (Eigen::Index i = 0; i < f.coeffs().size(); ++i) c.push_back(f.coeffs()[i]);
    json j = {{"d", f.dim_in()}, {"degree", f.degree()}, {"coeffs", c}};
    if (f.bound() > 0.0) j["bound"] = f.bound();
    return j;
}

PolyFn polyfn_from_json(const json& j) {
    const int d = get<int>(j, "d");
    const int degree = get<int>(j, "degree");
    const auto c = get<std::vector<double>>(j, "coeffs");
    const double bound = j.contains("bound") ? get<double>(j, "bound") : 0.0;
    if (d < 1 || degree < 0) throw FormatError("polynomial needs d >= 1 and degree >= 0");
    if (c.size() != basis_size(d, degree)) {
        throw FormatError("polynomial has " + std::to_string(c.size()) + " coefficients, expected " +
                          std::to_string(basis_size(d, degree)));
    }
    return PolyFn(d, degree, Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())), bound);
}

json to_json(const MixtureParams& params) {
    json w = json::array(), m = json::array(), c = json::array();
    for (const auto& f : params.weights) w.push_back(to_json(f));
    for (const auto& mk : params.means) {
        json row = json::array();
        for (const auto& f : mk) row.push_back(to_json(f));
        m.push_back(row);
    }
    for (const auto& cov : params.covs) c.push_back(matrix_json(cov));
    return {{"K", params.K}, {"d", params.d}, {"p", params.p}, {"weights", w}, {"means", m}, {"covs", c}};
}

MixtureParams params_from_json(const json& j) {
    MixtureParams params;
    params.K = get<int>(j, "K");
    params.d = get<int>(j, "d");
    params.p = get<int>(j, "p");
    for (const auto& w : member(j, "weights")) params.weights.push_back(polyfn_from_json(w));
    for (const auto& mk : member(j, "means")) {
        std::vector<PolyFn> row;
        for (const auto& f : mk) row.push_back(polyfn_from_json(f));
        params.means.push_back(std::move(row));
    }
    for (const auto& c : member(j, "covs")) params.covs.push_back(matrix_from_json(c));
    try {
        params.validate();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("invalid mixture parameters: ") + e.what());
    }
    return params;
}

json to_json(const ModelSpec& spec) {
    return {{"K", spec.K},
            {"weight_degree", spec.weight_degree},
            {"mean_degree", spec.mean_degree},
            {"d", spec.d},
            {"p", spec.p},
            {"weight_bound", spec.weight_bound},
            {"mean_bound", spec.mean_bound},
            {"structure",
             {{"means", to_string(spec.structure.means)},
              {"volume", to_string(spec.structure.volume)},
              {"rotation", to_string(spec.structure.rotation)},
              {"shape", to_string(spec.structure.shape)}}},
            {"box",
             {{"L_min", spec.box.L_min},
              {"L_max", spec.box.L_max},
              {"lambda_min", spec.box.lambda_min},
              {"lambda_max", spec.box.lambda_max}}}};
}

ModelSpec model_spec_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("model spec must be a JSON object");
    ModelSpec s;
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) field = get<std::decay_t<decltype(field)>>(j, key);
    };
    opt("K", s.K);
    opt("weight_degree", s.weight_degree);
    opt("mean_degree", s.mean_degree);
    opt("d", s.d);
    opt("p", s.p);
    opt("weight_bound", s.weight_bound);
    opt("mean_bound", s.mean_bound);
    try {
        if (j.contains("structure")) {
            const auto& st = j.at("structure");
            if (st.contains("means")) s.structure.means = sharing_from_string(get<std::string>(st, "means"));
            if (st.contains("volume")) s.structure.volume = sharing_from_string(get<std::string>(st, "volume"));
            if (st.contains("rotation")) s.structure.rotation = sharing_from_string(get<std::string>(st, "rotation"));
            if (st.contains("shape")) s.structure.shape = sharing_from_string(get<std::string>(st, "shape"));
        }
        if (j.contains("box")) {
            const auto& b = j.at("box");
            if (b.contains("L_min")) s.box.L_min = get<double>(b, "L_min");
            if (b.contains("L_max")) s.box.L_max = get<double>(b, "L_max");
            if (b.contains("lambda_min")) s.box.lambda_min = get<double>(b, "lambda_min");
            if (b.contains("lambda_max")) s.box.lambda_max = get<double>(b, "lambda_max");
        }
        s.validate();
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("invalid model spec: ") + e.what());
    }
    return s;
}

json to_json(const FitResult& fit) {
    json trace = json::array();
    for (double v : fit.loglik_trace) trace.push_back(v);
    return {{"params", to_json(fit.params)},
            {"loglik_trace", trace},
            {"n_iters", fit.n_iters},
            {"terminated_by", to_string(fit.terminated_by)},
            {"eta_slack", fit.eta_slack},
            {"variance_floor", fit.floor},
            {"final_loglik", fit.final_loglik()}};
}

FitResult fit_result_from_json(const json& j) {
    FitResult f;
    f.params = params_from_json(member(j, "params"));
    f.loglik_trace = get<std::vector<double>>(j, "loglik_trace");
    if (f.loglik_trace.empty()) throw FormatError("empty loglik_trace");
    f.n_iters = get<int>(j, "n_iters");
    f.terminated_by = terminated_by_from_string(get<std::string>(j, "terminated_by"));
    f.eta_slack = get<double>(j, "eta_slack");
    f.floor = j.contains("variance_floor") ? get<double>(j, "variance_floor") : 0.0;
    return f;
}

json to_json(const SelectionResult& sel) {
    json fits = json::object(), crit = json::object(), dims = json::object(), failures = json::object();
    for (const auto& [K, f] : sel.fits) fits[std::to_string(K)] = to_json(f);
    for (const auto& [K, v] : sel.criterion) crit[std::to_string(K)] = v;
    for (const auto& [K, v] : sel.dims) dims[std::to_string(K)] = v;
    for (const auto& [K, v] : sel.failures) failures[std::to_string(K)] = v;
    json path = json::array();
    for (const auto& pt : sel.dim_path) path.push_back({{"kappa", pt.kappa}, {"dimension", pt.dimension}, {"K", pt.K}});
    return {{"chosen_K", sel.chosen_K},
            {"kappa_used", sel.kappa_used},
            {"kappa_hat", sel.kappa_hat ? json(*sel.kappa_hat) : json(nullptr)},
            {"criterion", crit},
            {"dims", dims},
            {"failures", failures},
            {"dim_path", path},
            {"warnings", sel.warnings},
            {"fits", fits}};
}

namespace {

SelectionResult selection_from_json_unchecked(const json& j) {
    SelectionResult sel;
    auto key_K = [](const std::string& k) {
        try {
            return std::stoi(k);
        } catch (const std::exception&) {
            throw FormatError("bad K key '" + k + "'");
        }
    };
    sel.chosen_K = get<int>(j, "chosen_K");
    sel.kappa_used = get<double>(j, "kappa_used");
    if (j.contains("kappa_hat") && !j.at("kappa_hat").is_null()) sel.kappa_hat = get<double>(j, "kappa_hat");
    for (const auto& [k, v] : member(j, "criterion").items()) sel.criterion[key_K(k)] = v.get<double>();
    if (j.contains("dims")) {
        for (const auto& [k, v] : j.at("dims").items()) sel.dims[key_K(k)] = v.get<long>();
    }
    if (j.contains("failures")) {
        for (const auto& [k, v] : j.at("failures").items()) sel.failures[key_K(k)] = v.get<std::string>();
    }
    for (const auto& pt : member(j, "dim_path")) {
        sel.dim_path.push_back({get<double>(pt, "kappa"), get<long>(pt, "dimension"), pt.value("K", 0)});
    }
    if (j.contains("warnings")) sel.warnings = get<std::vector<std::string>>(j, "warnings");
    if (j.contains("fits")) {
        for (const auto& [k, v] : j.at("fits").items()) sel.fits.emplace(key_K(k), fit_result_from_json(v));
    }
    return sel;
}

}  // namespace

SelectionResult selection_result_from_json(const json& j) {
    try {
        return selection_from_json_unchecked(j);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad selection result: ") + e.what());
    }
}

json to_json(const DivergenceEstimate& est) {
    json j = {{"value", est.value}, {"mc_std_error", est.mc_std_error}, {"n_x", est.n_x}, {"m_y", est.m_y}};
    if (est.rho > 0.0) j["rho"] = est.rho;
    return j;
}

json to_json(const EntropyConstants& c) {
    return {{"C_W", c.C_W},
            {"C_Upsilon", c.C_Upsilon},
            {"C1", c.C1},
            {"frakC", c.frakC},
            {"C_penalty", c.C_penalty},
            {"gamma_kappa", c.gamma_kappa},
            {"kappa", c.kappa},
            {"c_U", c.c_U},
            {"K_max", c.K_max}};
}

json to_json(const BracketReport& r) {
    json j = {{"delta", r.delta},
              {"kappa", r.kappa},
              {"delta_sigma", r.delta_sigma},
              {"delta_sigma_cap", r.delta_sigma_cap},
              {"failed_conditions", r.failed_conditions},
              {"containment_checked", r.containment_checked},
              {"containment_ok", r.containment_ok},
              {"points_checked", r.points_checked},
              {"size_sq", r.size_sq},
              {"size_bound_sq", r.size_bound_sq},
              {"size_ok", r.size_ok}};
    if (r.witness) {
        json y = json::array();
        for (Eigen::Index i = 0; i < r.witness->y.size(); ++i) y.push_back(r.witness->y[i]);
        j["witness"] = {{"x", r.witness->x},
                        {"y", y},
                        {"log_lower", finite_or_null(r.witness->log_lower)},
                        {"log_value", finite_or_null(r.witness->log_value)},
                        {"log_upper", finite_or_null(r.witness->log_upper)}};
    }
    return j;
}

void write_dim_path_csv(std::ostream& os, const std::vector<DimPathPoint>& path) {
    os << "kappa,dimension,K\n";
    for (const auto& pt : path) os << format_double(pt.kappa) << ',' << pt.dimension << ',' << pt.K << '\n';
}

std::vector<DimPathPoint> read_dim_path_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("dim path CSV is empty");
    const auto header = split(line, ',');
    int ck = -1, cd = -1, cK = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto h = trim(header[i]);
        if (h == "kappa") ck = static_cast<int>(i);
        else if (h == "dimension") cd = static_cast<int>(i);
        else if (h == "K") cK = static_cast<int>(i);
    }
    if (ck < 0 || cd < 0) throw FormatError("dim path CSV needs kappa and dimension columns");
    std::vector<DimPathPoint> out;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) throw FormatError("ragged dim path CSV");
        DimPathPoint pt;
        pt.kappa = parse_double(cells[static_cast<std::size_t>(ck)]);
        pt.dimension = static_cast<long>(parse_double(cells[static_cast<std::size_t>(cd)]));
        if (cK >= 0) pt.K = static_cast<int>(parse_double(cells[static_cast<std::size_t>(cK)]));
        out.push_back(pt);
    }
    return out;
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_json(const std::filesystem::path& path, const json& j) { save_text(path, j.dump(2) + "\n"); }

void save_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
    if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace mixreg
