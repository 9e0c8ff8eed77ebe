#include "argpois/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "argpois/errors.hpp"

namespace argpois::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  return true;
}

json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double number_from(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return parse_double(j.get<std::string>(), where);
  throw ValidationError(where + ": expected a number");
}

std::size_t count_from(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    throw ValidationError("'" + key + "' must be a nonnegative integer");
  }
  return j.get<std::size_t>();
}

std::vector<double> doubles_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(number_from(e, where));
  return out;
}

json doubles_to(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

json to_json(const mcmc::AdaptState& a) {
  return {{"log_step", a.log_step},   {"target", a.target},
          {"gain", a.gain},           {"decay", a.decay},
          {"adapting", a.adapting},   {"iteration", a.iteration},
          {"accepted", a.accepted},   {"nan_rejects", a.nan_rejects},
          {"frozen_proposed", a.frozen_proposed}, {"frozen_accepted", a.frozen_accepted}};
}

mcmc::AdaptState adapt_from_json(const json& j) {
  mcmc::AdaptState a;
  a.log_step = j.at("log_step").get<double>();
  a.target = j.at("target").get<double>();
  a.gain = j.at("gain").get<double>();
  a.decay = j.at("decay").get<double>();
  a.adapting = j.at("adapting").get<bool>();
  a.iteration = j.at("iteration").get<std::uint64_t>();
  a.accepted = j.at("accepted").get<std::uint64_t>();
  a.nan_rejects = j.at("nan_rejects").get<std::uint64_t>();
  a.frozen_proposed = j.at("frozen_proposed").get<std::uint64_t>();
  a.frozen_accepted = j.at("frozen_accepted").get<std::uint64_t>();
  return a;
}

json to_json(const mcmc::ArgAdapt& a) {
  return {{"alpha", to_json(a.alpha)}, {"beta", to_json(a.beta)}, {"delta", to_json(a.delta)}};
}

mcmc::ArgAdapt arg_adapt_from_json(const json& j) {
  return {adapt_from_json(j.at("alpha")), adapt_from_json(j.at("beta")), adapt_from_json(j.at("delta"))};
}

json adapt_list(const std::vector<mcmc::AdaptState>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(to_json(s));
  return a;
}

std::vector<mcmc::AdaptState> adapt_list_from(const json& j) {
  std::vector<mcmc::AdaptState> v;
  for (const auto& e : j) v.push_back(adapt_from_json(e));
  return v;
}

json nested(const std::vector<std::vector<double>>& m) {
  json a = json::array();
  for (const auto& row : m) a.push_back(doubles_to(row));
  return a;
}

std::vector<std::vector<double>> nested_from(const json& j, const std::string& where) {
  std::vector<std::vector<double>> m;
  for (const auto& row : j) m.push_back(doubles_from(row, where));
  return m;
}

CsvTable read_table(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ValidationError(what + " file not found: " + p.string());
  return read_csv(p);
}

/// Covariate rows reordered to `dates`; misaligned rows are listed in the error.
Eigen::MatrixXd read_covariates(const fs::path& p, const std::vector<std::string>& dates, const std::string& what) {
  const auto table = read_table(p, what);
  const auto date_col = table.column("date");
  if (!date_col) throw ValidationError(what + " (" + p.string() + "): missing 'date' column");
  std::unordered_map<std::string, std::size_t> row_of;
  std::vector<std::string> extra;
  std::unordered_map<std::string, std::size_t> wanted;
  for (std::size_t t = 0; t < dates.size(); ++t) wanted.emplace(dates[t], t);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& d = table.rows[r][*date_col];
    if (!wanted.contains(d)) {
      extra.push_back("row " + std::to_string(r + 2) + " (" + d + ")");
    } else if (!row_of.emplace(d, r).second) {
      extra.push_back("row " + std::to_string(r + 2) + " (duplicate " + d + ")");
    }
  }
  std::vector<std::string> missing;
  for (const auto& d : dates) {
    if (!row_of.contains(d)) missing.push_back(d);
  }
  if (!extra.empty() || !missing.empty()) {
    std::string msg = what + " (" + p.string() + ") is not aligned with the counts dates.";
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size() && i < 20; ++i) s += (i ? ", " : "") + v[i];
      if (v.size() > 20) s += ", ... (" + std::to_string(v.size()) + " in total)";
      return s;
    };
    if (!extra.empty()) msg += " Unmatched rows: " + list(extra) + ".";
    if (!missing.empty()) msg += " Missing dates: " + list(missing) + ".";
    throw ValidationError(msg);
  }
  const auto p_cols = table.header.size() - 1;
  Eigen::MatrixXd v(static_cast<Eigen::Index>(dates.size()), static_cast<Eigen::Index>(p_cols));
  for (std::size_t t = 0; t < dates.size(); ++t) {
    const auto& row = table.rows[row_of.at(dates[t])];
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k == *date_col) continue;
      v(static_cast<Eigen::Index>(t), c++) =
          parse_double(row[k], what + " column '" + table.header[k] + "' date " + dates[t]);
    }
  }
  return v;
}

template <class T>
void set_if(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw ValidationError(section + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ValidationError("unknown key '" + k + "' in " + section);
    }
  }
}

std::string backend_name(pf::Backend b) { return b == pf::Backend::serial ? "serial" : "openmp"; }

}  // namespace

// ---- numbers and hashing -------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& where) {
  s = trim(s);
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(where + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

std::int64_t parse_int(std::string_view s, const std::string& where) {
  s = trim(s);
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(where + ": '" + std::string(s) + "' is not an integer");
  }
  return v;
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- CSV -----------------------------------------------------------------

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::string_view text, const std::string& source) {
  CsvTable t;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    ++line_no;
    if (!line.empty()) {
      auto fields = split(line);
      if (t.header.empty()) {
        t.header = std::move(fields);
      } else {
        if (fields.size() != t.header.size()) {
          throw ValidationError(source + " line " + std::to_string(line_no) + ": expected " +
                                std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
      }
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  if (t.header.empty()) throw ValidationError(source + ": empty file");
  return t;
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_text(path), path.string()); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---- panel ---------------------------------------------------------------

CountPanel read_panel(const DataPaths& paths, const Rescale& rescale) {
  const auto table = read_table(paths.counts, "counts");
  const auto date_col = table.column("date");
  const auto z_col = table.column("z");
  if (!date_col) throw ValidationError("counts (" + paths.counts.string() + "): missing 'date' column");
  if (!z_col) throw ValidationError("counts (" + paths.counts.string() + "): missing 'z' column");
  std::vector<std::size_t> y_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c != *date_col && c != *z_col) y_cols.push_back(c);
  }
  if (y_cols.empty()) throw ValidationError("counts: at least one series column besides date and z is required");
  if (table.rows.empty()) throw ValidationError("counts: no data rows");

  const std::size_t J = y_cols.size();
  const std::size_t T = table.rows.size();
  CountPanel panel;
  if (rescale.series.empty()) {
    panel.rescale.assign(J, 0.1);
  } else if (rescale.series.size() == 1) {
    panel.rescale.assign(J, rescale.series.front());
  } else if (rescale.series.size() == J) {
    panel.rescale = rescale.series;
  } else {
    throw ValidationError("rescale lists " + std::to_string(rescale.series.size()) + " factors for " +
                          std::to_string(J) + " series");
  }
  panel.global_rescale = rescale.global;
  for (double f : panel.rescale) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ValidationError("rescale factors must be positive");
  }
  if (!(panel.global_rescale > 0.0) || !std::isfinite(panel.global_rescale)) {
    throw ValidationError("global rescale factor must be positive");
  }

  auto scaled = [](const std::string& field, double factor, const std::string& where) {
    const double v = parse_double(field, where);
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(where + ": counts must be nonnegative");
    return static_cast<std::int64_t>(std::llround(v * factor));
  };
  panel.y.assign(J, std::vector<std::int64_t>(T));
  panel.z.resize(T);
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& row = table.rows[t];
    const std::string where = "counts line " + std::to_string(t + 2);
    if (!is_iso_date(row[*date_col])) throw ValidationError(where + ": date '" + row[*date_col] + "' is not YYYY-MM-DD");
    if (!seen.emplace(row[*date_col], t).second) {
      throw ValidationError(where + ": duplicate date " + row[*date_col]);
    }
    panel.dates.push_back(row[*date_col]);
    for (std::size_t j = 0; j < J; ++j) {
      panel.y[j][t] = scaled(row[y_cols[j]], panel.rescale[j], where + " column '" + table.header[y_cols[j]] + "'");
    }
    panel.z[t] = scaled(row[*z_col], panel.global_rescale, where + " column 'z'");
  }

  panel.covariates.resize(J);
  if (!paths.covariates.empty() && paths.covariates.size() != J) {
    throw ValidationError("data.covariates lists " + std::to_string(paths.covariates.size()) + " files for " +
                          std::to_string(J) + " series");
  }
  for (std::size_t j = 0; j < paths.covariates.size(); ++j) {
    if (!paths.covariates[j].empty()) {
      panel.covariates[j] = read_covariates(paths.covariates[j], panel.dates, "covariates for series " + std::to_string(j + 1));
    }
  }
  if (!paths.global_covariates.empty()) {
    panel.global_covariates = read_covariates(paths.global_covariates, panel.dates, "global covariates");
  }
  panel.fill_empty_covariates();
  panel.validate();
  return panel;
}

std::string counts_csv(const CountPanel& panel) {
  const auto dates = panel.dates.empty() ? sim::daily_dates("2020-01-01", panel.days()) : panel.dates;
  std::string s = "date";
  for (std::size_t j = 0; j < panel.series(); ++j) s += ",y_" + std::to_string(j + 1);
  s += ",z\n";
  for (std::size_t t = 0; t < panel.days(); ++t) {
    s += dates[t];
    for (std::size_t j = 0; j < panel.series(); ++j) s += "," + std::to_string(panel.y[j][t]);
    s += "," + std::to_string(panel.z[t]) + "\n";
  }
  return s;
}

std::string covariates_csv(const std::vector<std::string>& dates, const Eigen::MatrixXd& v) {
  std::string s = "date";
  for (Eigen::Index c = 0; c < v.cols(); ++c) s += ",v_" + std::to_string(c + 1);
  s += "\n";
  for (Eigen::Index t = 0; t < v.rows(); ++t) {
    s += dates.at(static_cast<std::size_t>(t));
    for (Eigen::Index c = 0; c < v.cols(); ++c) s += "," + format_double(v(t, c));
    s += "\n";
  }
  return s;
}

std::string data_hash(const CountPanel& panel) {
  const auto dates = panel.dates.empty() ? sim::daily_dates("2020-01-01", panel.days()) : panel.dates;
  std::string blob = counts_csv(panel);
  for (const auto& v : panel.covariates) blob += covariates_csv(dates, v);
  blob += covariates_csv(dates, panel.global_covariates);
  for (double f : panel.rescale) blob += format_double(f) + ";";
  blob += format_double(panel.global_rescale);
  return fnv1a_hex(blob);
}

// ---- JSON: model types ---------------------------------------------------

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

json to_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    a.push_back(row);
  }
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = doubles_from(j, "vector");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("matrix: expected an array of rows");
  const auto rows = nested_from(j, "matrix");
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) throw ValidationError("matrix: ragged rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

json to_json(const ArgParams& a) { return {{"alpha", a.alpha}, {"beta", a.beta}, {"delta", a.delta}}; }

ArgParams arg_from_json(const json& j) {
  ArgParams a;
  a.alpha = number_from(j.at("alpha"), "alpha");
  a.beta = number_from(j.at("beta"), "beta");
  a.delta = number_from(j.at("delta"), "delta");
  return a;
}

json to_json(const StaticParams& theta) {
  json series = json::array();
  for (const auto& sp : theta.series) {
    series.push_back({{"arg", to_json(sp.arg)},
                      {"xi", doubles_to(sp.xi)},
                      {"phi", to_json(sp.phi)},
                      {"transition", to_json(sp.transition)},
                      {"eta", sp.eta},
                      {"gamma", sp.gamma}});
  }
  return {{"global", {{"arg", to_json(theta.global.arg)}, {"phi", to_json(theta.global.phi)}}},
          {"series", series}};
}

StaticParams static_params_from_json(const json& j) {
  StaticParams theta;
  theta.global.arg = arg_from_json(j.at("global").at("arg"));
  theta.global.phi = vector_from_json(j.at("global").at("phi"));
  for (const auto& e : j.at("series")) {
    SeriesParams sp;
    sp.arg = arg_from_json(e.at("arg"));
    sp.xi = doubles_from(e.at("xi"), "xi");
    sp.phi = vector_from_json(e.at("phi"));
    sp.transition = matrix_from_json(e.at("transition"));
    sp.eta = number_from(e.at("eta"), "eta");
    sp.gamma = number_from(e.at("gamma"), "gamma");
    theta.series.push_back(std::move(sp));
  }
  return theta;
}

json to_json(const LatentPaths& p) {
  return {{"w_initial", p.w_initial}, {"w", doubles_to(p.w)},     {"x_initial", doubles_to(p.x_initial)},
          {"x", nested(p.x)},         {"s_initial", p.s_initial}, {"s", p.s}};
}

LatentPaths paths_from_json(const json& j) {
  LatentPaths p;
  p.w_initial = number_from(j.at("w_initial"), "w_initial");
  p.w = doubles_from(j.at("w"), "w");
  p.x_initial = doubles_from(j.at("x_initial"), "x_initial");
  p.x = nested_from(j.at("x"), "x");
  p.s_initial = j.at("s_initial").get<std::vector<int>>();
  p.s = j.at("s").get<std::vector<std::vector<int>>>();
  return p;
}

// ---- JSON: sampler configuration ----------------------------------------

namespace {

struct HyperField {
  const char* name;
  double mcmc::HyperParams::*member;
};

constexpr HyperField kHyperScalars[] = {
    {"a_eta", &mcmc::HyperParams::a_eta},         {"b_eta", &mcmc::HyperParams::b_eta},
    {"a_gamma", &mcmc::HyperParams::a_gamma},     {"b_gamma", &mcmc::HyperParams::b_gamma},
    {"c_gamma", &mcmc::HyperParams::c_gamma},     {"a_alpha", &mcmc::HyperParams::a_alpha},
    {"b_alpha", &mcmc::HyperParams::b_alpha},     {"a_beta", &mcmc::HyperParams::a_beta},
    {"b_beta", &mcmc::HyperParams::b_beta},       {"a_delta", &mcmc::HyperParams::a_delta},
    {"b_delta", &mcmc::HyperParams::b_delta},     {"tau", &mcmc::HyperParams::tau},
    {"a_alpha_w", &mcmc::HyperParams::a_alpha_w}, {"b_alpha_w", &mcmc::HyperParams::b_alpha_w},
    {"a_beta_w", &mcmc::HyperParams::a_beta_w},   {"b_beta_w", &mcmc::HyperParams::b_beta_w},
    {"a_delta_w", &mcmc::HyperParams::a_delta_w}, {"b_delta_w", &mcmc::HyperParams::b_delta_w},
    {"tau_w", &mcmc::HyperParams::tau_w},         {"phi_prior_var", &mcmc::HyperParams::phi_prior_var},
};

}  // namespace

json to_json(const mcmc::HyperParams& h) {
  json j;
  for (const auto& f : kHyperScalars) j[f.name] = h.*f.member;
  j["phi_mean"] = to_json(h.phi_mean);
  j["phi_cov"] = to_json(h.phi_cov);
  j["phi_z_mean"] = to_json(h.phi_z_mean);
  j["phi_z_cov"] = to_json(h.phi_z_cov);
  j["lambda_prior"] = doubles_to(h.lambda_prior);
  return j;
}

mcmc::HyperParams hyper_from_json(const json& j) {
  mcmc::HyperParams h;
  if (j.is_null()) return h;
  std::vector<std::string> known{"phi_mean", "phi_cov", "phi_z_mean", "phi_z_cov", "lambda_prior"};
  for (const auto& f : kHyperScalars) known.emplace_back(f.name);
  reject_unknown(j, known, "hyper");
  for (const auto& f : kHyperScalars) {
    if (j.contains(f.name)) h.*f.member = number_from(j.at(f.name), std::string("hyper.") + f.name);
  }
  if (j.contains("phi_mean")) h.phi_mean = vector_from_json(j.at("phi_mean"));
  if (j.contains("phi_cov")) h.phi_cov = matrix_from_json(j.at("phi_cov"));
  if (j.contains("phi_z_mean")) h.phi_z_mean = vector_from_json(j.at("phi_z_mean"));
  if (j.contains("phi_z_cov")) h.phi_z_cov = matrix_from_json(j.at("phi_z_cov"));
  if (j.contains("lambda_prior")) h.lambda_prior = doubles_from(j.at("lambda_prior"), "hyper.lambda_prior");
  return h;
}

json to_json(const mcmc::McmcConfig& c) {
  const auto& b = c.blocks;
  return {{"sweeps", c.sweeps},
          {"burnin", c.burnin},
          {"thin", c.thin},
          {"path_thin", c.path_thin},
          {"particles", c.particles},
          {"filter_retries", c.filter_retries},
          {"seed", c.seed},
          {"adapt_gain", c.adapt_gain},
          {"adapt_decay", c.adapt_decay},
          {"initial_step", c.initial_step},
          {"ncga_tol", c.ncga_tol},
          {"backend", backend_name(c.backend)},
          {"blocks",
           {{"global_latent", b.global_latent},
            {"global_arg", b.global_arg},
            {"global_phi", b.global_phi},
            {"local_latent", b.local_latent},
            {"regimes", b.regimes},
            {"transition", b.transition},
            {"jump", b.jump},
            {"local_arg", b.local_arg},
            {"local_phi", b.local_phi}}}};
}

mcmc::McmcConfig mcmc_config_from_json(const json& j, mcmc::McmcConfig c) {
  if (j.is_null()) return c;
  reject_unknown(j,
                 {"sweeps", "burnin", "thin", "path_thin", "particles", "filter_retries", "seed", "adapt_gain",
                  "adapt_decay", "initial_step", "ncga_tol", "backend", "blocks"},
                 "mcmc");
  for (const auto* key : {"sweeps", "burnin", "thin", "path_thin", "particles"}) {
    if (!j.contains(key)) continue;
    const auto v = count_from(j.at(key), std::string("mcmc.") + key);
    const std::string k = key;
    if (k == "sweeps") c.sweeps = v;
    else if (k == "burnin") c.burnin = v;
    else if (k == "thin") c.thin = v;
    else if (k == "path_thin") c.path_thin = v;
    else c.particles = v;
  }
  if (j.contains("filter_retries")) c.filter_retries = static_cast<int>(count_from(j.at("filter_retries"), "mcmc.filter_retries"));
  if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(count_from(j.at("seed"), "mcmc.seed"));
  if (j.contains("adapt_gain")) c.adapt_gain = number_from(j.at("adapt_gain"), "mcmc.adapt_gain");
  if (j.contains("adapt_decay")) c.adapt_decay = number_from(j.at("adapt_decay"), "mcmc.adapt_decay");
  if (j.contains("initial_step")) c.initial_step = number_from(j.at("initial_step"), "mcmc.initial_step");
  if (j.contains("ncga_tol")) c.ncga_tol = number_from(j.at("ncga_tol"), "mcmc.ncga_tol");
  if (j.contains("backend")) {
    const auto name = j.at("backend").get<std::string>();
    if (name == "serial") c.backend = pf::Backend::serial;
    else if (name == "openmp") c.backend = pf::Backend::openmp;
    else throw ValidationError("mcmc.backend must be 'serial' or 'openmp'");
  }
  if (j.contains("blocks")) {
    const auto& b = j.at("blocks");
    reject_unknown(b,
                   {"global_latent", "global_arg", "global_phi", "local_latent", "regimes", "transition", "jump",
                    "local_arg", "local_phi"},
                   "mcmc.blocks");
    set_if(b, "global_latent", c.blocks.global_latent);
    set_if(b, "global_arg", c.blocks.global_arg);
    set_if(b, "global_phi", c.blocks.global_phi);
    set_if(b, "local_latent", c.blocks.local_latent);
    set_if(b, "regimes", c.blocks.regimes);
    set_if(b, "transition", c.blocks.transition);
    set_if(b, "jump", c.blocks.jump);
    set_if(b, "local_arg", c.blocks.local_arg);
    set_if(b, "local_phi", c.blocks.local_phi);
  }
  return c;
}

// ---- JSON: sampler state -------------------------------------------------

json to_json(const mcmc::GibbsState& st) {
  json series_adapt = json::array();
  for (const auto& sa : st.series_adapt) {
    series_adapt.push_back({{"arg", to_json(sa.arg)}, {"xi", to_json(sa.xi)}, {"phi", adapt_list(sa.phi)}});
  }
  json regime_prob = json::array();
  for (const auto& m : st.sums.regime_prob) regime_prob.push_back(to_json(m));
  return {{"theta", to_json(st.theta)},
          {"paths", to_json(st.paths)},
          {"global_adapt", {{"arg", to_json(st.global_adapt.arg)}, {"phi", adapt_list(st.global_adapt.phi)}}},
          {"series_adapt", series_adapt},
          {"sweeps_done", st.sweeps_done},
          {"retained_done", st.retained_done},
          {"sums",
           {{"draws", st.sums.draws},
            {"w", doubles_to(st.sums.w)},
            {"x", nested(st.sums.x)},
            {"amplification", nested(st.sums.amplification)},
            {"covariate", nested(st.sums.covariate)},
            {"global_covariate", doubles_to(st.sums.global_covariate)},
            {"regime_prob", regime_prob}}}};
}

mcmc::GibbsState gibbs_state_from_json(const json& j) {
  mcmc::GibbsState st;
  st.theta = static_params_from_json(j.at("theta"));
  st.paths = paths_from_json(j.at("paths"));
  st.global_adapt.arg = arg_adapt_from_json(j.at("global_adapt").at("arg"));
  st.global_adapt.phi = adapt_list_from(j.at("global_adapt").at("phi"));
  for (const auto& e : j.at("series_adapt")) {
    mcmc::SeriesAdapt sa;
    sa.arg = arg_adapt_from_json(e.at("arg"));
    sa.xi = adapt_from_json(e.at("xi"));
    sa.phi = adapt_list_from(e.at("phi"));
    st.series_adapt.push_back(std::move(sa));
  }
  st.sweeps_done = j.at("sweeps_done").get<std::size_t>();
  st.retained_done = j.at("retained_done").get<std::size_t>();
  const auto& s = j.at("sums");
  st.sums.draws = s.at("draws").get<std::size_t>();
  st.sums.w = doubles_from(s.at("w"), "sums.w");
  st.sums.x = nested_from(s.at("x"), "sums.x");
  st.sums.amplification = nested_from(s.at("amplification"), "sums.amplification");
  st.sums.covariate = nested_from(s.at("covariate"), "sums.covariate");
  st.sums.global_covariate = doubles_from(s.at("global_covariate"), "sums.global_covariate");
  for (const auto& m : s.at("regime_prob")) st.sums.regime_prob.push_back(matrix_from_json(m));
  return st;
}

json to_json(const mcmc::DrawRecord& r) {
  json j = {{"sweep", r.sweep}, {"loglik", number(r.loglik)}, {"theta", to_json(r.theta)}};
  if (r.paths) j["paths"] = to_json(*r.paths);
  return j;
}

mcmc::DrawRecord draw_from_json(const json& j) {
  mcmc::DrawRecord r;
  r.sweep = j.at("sweep").get<std::size_t>();
  r.loglik = number_from(j.at("loglik"), "loglik");
  r.theta = static_params_from_json(j.at("theta"));
  if (j.contains("paths")) r.paths = paths_from_json(j.at("paths"));
  return r;
}

// ---- JSON: simulation spec -----------------------------------------------

namespace {

sim::CovariateSpec covariate_spec_from_json(const json& j, const std::string& where) {
  sim::CovariateSpec c;
  if (j.is_null()) return c;
  reject_unknown(j, {"kind", "value", "amplitude", "period", "phase", "matrix"}, where);
  c.kind = sim::covariate_kind_from_string(j.value("kind", std::string("none")));
  if (j.contains("value")) c.value = number_from(j.at("value"), where + ".value");
  if (j.contains("amplitude")) c.amplitude = number_from(j.at("amplitude"), where + ".amplitude");
  if (j.contains("period")) c.period = number_from(j.at("period"), where + ".period");
  if (j.contains("phase")) c.phase = number_from(j.at("phase"), where + ".phase");
  if (j.contains("matrix")) c.matrix = matrix_from_json(j.at("matrix"));
  return c;
}

json to_json(const sim::CovariateSpec& c) {
  json j = {{"kind", sim::to_string(c.kind)}};
  switch (c.kind) {
    case sim::CovariateSpec::Kind::none: break;
    case sim::CovariateSpec::Kind::constant: j["value"] = c.value; break;
    case sim::CovariateSpec::Kind::sinusoid:
      j["amplitude"] = c.amplitude;
      j["period"] = c.period;
      j["phase"] = c.phase;
      break;
    case sim::CovariateSpec::Kind::matrix: j["matrix"] = io::to_json(c.matrix); break;
  }
  return j;
}

ArgParams arg_fields(const json& j, ArgParams a, const std::string& where) {
  if (j.contains("alpha")) a.alpha = number_from(j.at("alpha"), where + ".alpha");
  if (j.contains("beta")) a.beta = number_from(j.at("beta"), where + ".beta");
  if (j.contains("delta")) a.delta = number_from(j.at("delta"), where + ".delta");
  return a;
}

}  // namespace

sim::SimSpec sim_spec_from_json(const json& j) {
  reject_unknown(j, {"days", "seed", "allow_nonstationary", "start_date", "global", "series"}, "simulation spec");
  std::uint64_t seed = 1;
  if (j.contains("seed")) seed = static_cast<std::uint64_t>(count_from(j.at("seed"), "seed"));
  auto spec = sim::default_spec(seed);
  if (j.contains("days")) spec.days = count_from(j.at("days"), "days");
  set_if(j, "allow_nonstationary", spec.allow_nonstationary);
  set_if(j, "start_date", spec.start_date);
  if (j.contains("global")) {
    const auto& g = j.at("global");
    reject_unknown(g, {"alpha", "beta", "delta", "phi", "covariates"}, "global");
    spec.theta.global.arg = arg_fields(g, spec.theta.global.arg, "global");
    if (g.contains("phi")) spec.theta.global.phi = vector_from_json(g.at("phi"));
    if (g.contains("covariates")) spec.global_covariates = covariate_spec_from_json(g.at("covariates"), "global.covariates");
  }
  if (j.contains("series")) {
    const auto& arr = j.at("series");
    if (!arr.is_array() || arr.empty()) throw ValidationError("'series' must be a nonempty array");
    spec.theta.series.clear();
    spec.covariates.clear();
    bool any_cov = false;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      const std::string where = "series[" + std::to_string(i) + "]";
      reject_unknown(e, {"alpha", "beta", "delta", "xi", "transition", "phi", "eta", "gamma", "covariates"}, where);
      SeriesParams sp;
      sp.arg = arg_fields(e, sp.arg, where);
      if (!e.contains("xi") || !e.contains("transition")) {
        throw ValidationError(where + ": 'xi' and 'transition' are required");
      }
      sp.xi = doubles_from(e.at("xi"), where + ".xi");
      sp.transition = matrix_from_json(e.at("transition"));
      sp.phi = e.contains("phi") ? vector_from_json(e.at("phi")) : Eigen::VectorXd(0);
      if (e.contains("eta")) sp.eta = number_from(e.at("eta"), where + ".eta");
      if (e.contains("gamma")) sp.gamma = number_from(e.at("gamma"), where + ".gamma");
      spec.theta.series.push_back(std::move(sp));
      spec.covariates.push_back(e.contains("covariates") ? covariate_spec_from_json(e.at("covariates"), where + ".covariates")
                                                         : sim::CovariateSpec{});
      any_cov = any_cov || e.contains("covariates");
    }
    if (!any_cov) spec.covariates.clear();
  }
  spec.validate();
  return spec;
}

json to_json(const sim::SimSpec& spec) {
  json series = json::array();
  for (std::size_t j = 0; j < spec.series(); ++j) {
    const auto& sp = spec.theta.series[j];
    json e = {{"alpha", sp.arg.alpha},
              {"beta", sp.arg.beta},
              {"delta", sp.arg.delta},
              {"xi", doubles_to(sp.xi)},
              {"transition", to_json(sp.transition)},
              {"phi", to_json(sp.phi)}};
    if (!spec.covariates.empty()) e["covariates"] = to_json(spec.covariates[j]);
    series.push_back(e);
  }
  return {{"days", spec.days},
          {"seed", spec.seed},
          {"allow_nonstationary", spec.allow_nonstationary},
          {"start_date", spec.start_date},
          {"global",
           {{"alpha", spec.theta.global.arg.alpha},
            {"beta", spec.theta.global.arg.beta},
            {"delta", spec.theta.global.arg.delta},
            {"phi", to_json(spec.theta.global.phi)},
            {"covariates", to_json(spec.global_covariates)}}},
          {"series", series}};
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  const auto text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

// ---- draw store ----------------------------------------------------------

namespace {

json header_json(const DrawHeader& h) {
  return {{"format", kDrawFormat},
          {"version", kDrawVersion},
          {"config_hash", h.config_hash},
          {"data_hash", h.data_hash},
          {"seed", h.seed}};
}

DrawHeader parse_header(const std::string& line, const fs::path& path) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw ValidationError(path.string() + ": draw store header is not JSON");
  }
  if (j.value("format", std::string()) != kDrawFormat) throw ValidationError(path.string() + ": not a draw store");
  if (j.value("version", 0) != kDrawVersion) {
    throw ValidationError(path.string() + ": unsupported draw store version " + j.value("version", json()).dump());
  }
  return {j.at("config_hash").get<std::string>(), j.at("data_hash").get<std::string>(),
          j.at("seed").get<std::uint64_t>()};
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

DrawWriter::DrawWriter(const fs::path& path, const DrawHeader& header, std::optional<std::size_t> keep_records) {
  const std::string head = header_json(header).dump();
  if (keep_records) {
    auto lines = read_lines(path);
    if (lines.empty()) throw ValidationError(path.string() + ": empty draw store");
    const auto existing = parse_header(lines.front(), path);
    if (existing.config_hash != header.config_hash || existing.data_hash != header.data_hash) {
      throw ValidationError(path.string() + ": draw store belongs to a different configuration or dataset");
    }
    if (lines.size() - 1 < *keep_records) {
      throw ValidationError(path.string() + ": draw store holds " + std::to_string(lines.size() - 1) +
                            " records but the checkpoint expects " + std::to_string(*keep_records));
    }
    lines.resize(*keep_records + 1);
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_text(path, text);
    out_.open(path, std::ios::binary | std::ios::app);
  } else {
    out_.open(path, std::ios::binary | std::ios::trunc);
    out_ << head << "\n";
  }
  if (!out_) throw std::runtime_error("cannot write " + path.string());
}

void DrawWriter::write(const mcmc::DrawRecord& r) {
  out_ << to_json(r).dump() << "\n";
  if (!out_) throw std::runtime_error("draw store write failed");
}

DrawStore read_draws(const fs::path& path, const std::optional<std::string>& expected_config_hash) {
  if (!fs::exists(path)) throw ValidationError("draw store not found: " + path.string());
  const auto lines = read_lines(path);
  if (lines.empty()) throw ValidationError(path.string() + ": empty draw store");
  DrawStore store;
  store.header = parse_header(lines.front(), path);
  if (expected_config_hash && store.header.config_hash != *expected_config_hash) {
    throw ValidationError(path.string() + ": config hash " + store.header.config_hash +
                          " does not match the configuration (" + *expected_config_hash + ")");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    try {
      store.records.push_back(draw_from_json(json::parse(lines[i])));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + " line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return store;
}

// ---- run configuration ---------------------------------------------------

FitConfig FitConfig::from_json(const json& j, const fs::path& base) {
  reject_unknown(j, {"data", "rescale", "hyper", "mcmc"}, "fit config");
  FitConfig c;
  if (!j.contains("data")) throw ValidationError("fit config: 'data' section is required");
  const auto& d = j.at("data");
  reject_unknown(d, {"counts", "covariates", "global_covariates"}, "data");
  auto resolve = [&](const json& p) -> fs::path {
    if (p.is_null()) return {};
    fs::path path = p.get<std::string>();
    if (path.empty()) return path;
    return fs::absolute(path.is_absolute() ? path : base / path).lexically_normal();
  };
  if (!d.contains("counts")) throw ValidationError("data.counts is required");
  c.data.counts = resolve(d.at("counts"));
  if (d.contains("covariates")) {
    for (const auto& p : d.at("covariates")) c.data.covariates.push_back(resolve(p));
  }
  if (d.contains("global_covariates")) c.data.global_covariates = resolve(d.at("global_covariates"));
  if (j.contains("rescale")) {
    const auto& r = j.at("rescale");
    reject_unknown(r, {"series", "global"}, "rescale");
    if (r.contains("series")) {
      c.rescale.series = r.at("series").is_array() ? doubles_from(r.at("series"), "rescale.series")
                                                   : std::vector<double>{number_from(r.at("series"), "rescale.series")};
    }
    if (r.contains("global")) c.rescale.global = number_from(r.at("global"), "rescale.global");
  }
  if (j.contains("hyper")) c.hyper = hyper_from_json(j.at("hyper"));
  if (j.contains("mcmc")) c.mcmc = mcmc_config_from_json(j.at("mcmc"));
  return c;
}

json FitConfig::to_json() const {
  json cov = json::array();
  for (const auto& p : data.covariates) cov.push_back(p.string());
  json rescale_series = json::array();
  for (double f : rescale.series) rescale_series.push_back(f);
  return {{"data",
           {{"counts", data.counts.string()},
            {"covariates", cov},
            {"global_covariates", data.global_covariates.string()}}},
          {"rescale", {{"series", rescale_series}, {"global", rescale.global}}},
          {"hyper", io::to_json(hyper)},
          {"mcmc", io::to_json(mcmc)}};
}

std::string FitConfig::hash() const {
  auto j = to_json();
  j.erase("data");
  // both backends give identical draws
  j["mcmc"].erase("backend");
  return fnv1a_hex(j.dump());
}

}  // namespace argpois::io
