#include "covreg/dataset_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace covreg {
namespace io {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kSymTol = 1e-9;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

Matrix parse_matrix(const json& j, int rows, int cols, const std::string& field) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw ValidationError(field, "expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw ValidationError(field, "row " + std::to_string(r) + " must have " +
                                       std::to_string(cols) + " entries");
    }
    for (int c = 0; c < cols; ++c) {
      if (!row[c].is_number()) {
        throw ValidationError(field, "non-numeric entry at (" +
                                         std::to_string(r) + "," +
                                         std::to_string(c) + ")");
      }
      m(r, c) = row[c].get<double>();
    }
  }
  if (!m.allFinite()) throw ValidationError(field, "entries must be finite");
  return m;
}

SymMatrix load_symmetric(const json& j, int p, const std::string& field,
                         std::vector<std::string>& warnings) {
  Matrix m = parse_matrix(j, p, p, field);
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (asym > kSymTol * scale) {
    throw ValidationError(field, "matrix is not symmetric (max asymmetry " +
                                     fmt(asym) + ")");
  }
  if (asym > 0.0) {
    warnings.push_back(field + ": symmetrized (max asymmetry " + fmt(asym) + ")");
  }
  return SymMatrix(m);
}

ordered_json matrix_to_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

int get_positive_int(const json& j, const std::string& field) {
  if (!j.contains(field) || !j[field].is_number_integer() ||
      j[field].get<long>() < 1) {
    throw ValidationError(field, "must be a positive integer");
  }
  return j[field].get<int>();
}

}  // namespace

LoadedDataset dataset_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError("dataset", std::string("JSON parse error: ") + e.what());
  }
  if (j.value("schema", 0) != 1) {
    throw ValidationError("schema", "expected schema 1");
  }
  const std::string family = j.value("family", "");
  if (family != "linear" && family != "network_ar") {
    throw ValidationError("family", "must be 'linear' or 'network_ar'");
  }
  LoadedDataset out;
  const int n = get_positive_int(j, "n");
  const int p = get_positive_int(j, "p");
  const int K = get_positive_int(j, "K");

  out.data.family.kind =
      family == "linear" ? FamilyKind::Linear : FamilyKind::NetworkAr;
  out.data.family.K = K;
  out.data.family.p = p;
  if (out.data.family.kind == FamilyKind::NetworkAr && K != 2) {
    throw ValidationError("K", "network_ar family has K = 2");
  }

  if (!j.contains("Y")) throw ValidationError("Y", "missing");
  out.data.Y = parse_matrix(j["Y"], n, p, "Y");

  if (!j.contains("X") || !j["X"].is_array() ||
      static_cast<int>(j["X"].size()) != n) {
    throw ValidationError("X", "expected one entry per observation");
  }
  const bool outer = j.value("outer_product", false);
  out.data.X.reserve(n);
  for (int i = 0; i < n; ++i) {
    const json& xi = j["X"][i];
    const std::string field = "X[" + std::to_string(i) + "]";
    CovariateSet x;
    x.family = out.data.family.kind;
    if (out.data.family.kind == FamilyKind::NetworkAr) {
      x.designs.push_back(load_symmetric(xi, p, field, out.warnings));
      model::validate(out.data.family, x);
    } else if (outer) {
      if (!xi.is_array() || static_cast<int>(xi.size()) != K - 1) {
        throw ValidationError(field, "expected K-1 vectors");
      }
      std::vector<Vector> vs;
      for (int k = 0; k < K - 1; ++k) {
        const json& vj = xi[k];
        if (!vj.is_array() || static_cast<int>(vj.size()) != p) {
          throw ValidationError(field, "vector " + std::to_string(k) +
                                           " must have length p");
        }
        Vector v(p);
        for (int c = 0; c < p; ++c) v[c] = vj[c].get<double>();
        vs.push_back(std::move(v));
      }
      x = model::from_vectors(vs, /*intercept=*/true).second;
    } else {
      if (!xi.is_array() || static_cast<int>(xi.size()) != K) {
        throw ValidationError(field, "expected K design matrices");
      }
      for (int k = 0; k < K; ++k) {
        x.designs.push_back(load_symmetric(
            xi[k], p, field + "[" + std::to_string(k) + "]", out.warnings));
      }
    }
    out.data.X.push_back(std::move(x));
  }
  return out;
}

LoadedDataset load_dataset(const std::string& path) {
  return dataset_from_json(read_file(path));
}

std::string dataset_to_json(const Dataset& data) {
  ordered_json j;
  j["schema"] = 1;
  j["family"] =
      data.family.kind == FamilyKind::Linear ? "linear" : "network_ar";
  j["n"] = data.n();
  j["p"] = data.family.p;
  j["K"] = data.family.K;
  ordered_json xs = ordered_json::array();
  for (const CovariateSet& x : data.X) {
    if (data.family.kind == FamilyKind::NetworkAr) {
      xs.push_back(matrix_to_json(x.designs[0].mat()));
    } else {
      ordered_json designs = ordered_json::array();
      for (const SymMatrix& d : x.designs) designs.push_back(matrix_to_json(d.mat()));
      xs.push_back(std::move(designs));
    }
  }
  j["X"] = std::move(xs);
  j["Y"] = matrix_to_json(data.Y);
  return j.dump(1);
}

void save_dataset(const Dataset& data, const std::string& path) {
  write_file(path, dataset_to_json(data));
}

namespace {

ordered_json config_to_json(const SimConfig& c) {
  ordered_json j;
  j["model"] = to_string(c.model);
  j["n"] = c.n;
  j["p"] = c.p;
  j["reps"] = c.reps;
  j["setting"] = to_string(c.x_setting);
  j["errors"] = to_string(c.error_law);
  ordered_json est = ordered_json::array();
  for (EstimatorKind e : c.estimators) est.push_back(to_string(e));
  j["estimators"] = std::move(est);
  j["criteria"] = c.criteria;
  j["criteria_weight"] =
      c.criteria_weight == WeightSpec::Kind::KnownV ? "known_v" : "identity";
  j["with_test_errors"] = c.with_test_errors;
  j["seed"] = c.seed;
  // Worker count is an execution detail: the report is byte-identical
  // across worker counts, so it stays out of the config echo.
  j["max_failure_rate"] = c.max_failure_rate;
  return j;
}

}  // namespace

std::string report_to_json(const SimReport& r) {
  ordered_json j;
  j["schema"] = 1;
  j["config"] = config_to_json(r.config);
  ordered_json b0 = ordered_json::array();
  for (Eigen::Index k = 0; k < r.beta0.size(); ++k) b0.push_back(r.beta0[k]);
  j["beta0"] = std::move(b0);
  j["reps_completed"] = r.reps_completed;
  j["failures"] = r.failures;
  j["failure_messages"] = r.failure_messages;
  j["sd_degenerate"] = r.sd_degenerate;

  ordered_json ests = ordered_json::array();
  for (const EstimatorSummary& e : r.estimators) {
    ordered_json je;
    je["estimator"] = to_string(e.kind);
    ordered_json bias = ordered_json::array(), sd = ordered_json::array(),
                 rmse = ordered_json::array();
    for (const ComponentStats& c : e.components) {
      bias.push_back(c.bias);
      sd.push_back(c.sd);
      rmse.push_back(c.rmse);
    }
    je["bias"] = std::move(bias);
    je["sd"] = std::move(sd);
    je["rmse"] = std::move(rmse);
    je["mean_s_error"] = e.mean_s_error;
    je["mean_f_error"] = e.mean_f_error;
    ests.push_back(std::move(je));
  }
  j["estimators"] = std::move(ests);

  ordered_json te;
  te["available"] = r.test_errors.available;
  if (r.test_errors.available) {
    if (r.config.x_setting == XSetting::FixedX) {
      te["err_fixed"] = r.test_errors.err_fixed;
      te["se_fixed"] = r.test_errors.se_fixed;
    } else {
      te["err_same"] = r.test_errors.err_same;
      te["se_same"] = r.test_errors.se_same;
      te["err_random"] = r.test_errors.err_random;
      te["se_random"] = r.test_errors.se_random;
      te["gap_random_same"] = r.test_errors.gap_random_same;
      te["se_gap"] = r.test_errors.se_gap;
    }
  }
  j["test_errors"] = std::move(te);

  ordered_json crits = ordered_json::array();
  for (const CriterionSummary& c : r.criteria) {
    ordered_json jc;
    jc["name"] = c.name;
    jc["mean"] = c.mean;
    jc["mc_se"] = c.mc_se;
    jc["bias_vs_same"] = c.bias_vs_same;
    jc["se_bias_vs_same"] = c.se_bias_vs_same;
    jc["bias_vs_random"] = c.bias_vs_random;
    jc["se_bias_vs_random"] = c.se_bias_vs_random;
    crits.push_back(std::move(jc));
  }
  j["criteria"] = std::move(crits);
  return j.dump(1);
}

std::string metrics_csv(const SimReport& r) {
  std::ostringstream os;
  os << "estimator,component,true_value,bias,sd,rmse,mean_s_error,mean_f_error\n";
  for (const EstimatorSummary& e : r.estimators) {
    for (size_t k = 0; k < e.components.size(); ++k) {
      os << to_string(e.kind) << ',' << (k + 1) << ',' << fmt(r.beta0[k]) << ','
         << fmt(e.components[k].bias) << ',' << fmt(e.components[k].sd) << ','
         << fmt(e.components[k].rmse) << ',' << fmt(e.mean_s_error) << ','
         << fmt(e.mean_f_error) << '\n';
    }
  }
  return os.str();
}

std::string criteria_csv(const SimReport& r) {
  std::ostringstream os;
  os << "criterion,mean,mc_se,bias_vs_same,se_bias_vs_same,"
        "bias_vs_random,se_bias_vs_random\n";
  for (const CriterionSummary& c : r.criteria) {
    os << c.name << ',' << fmt(c.mean) << ',' << fmt(c.mc_se) << ','
       << fmt(c.bias_vs_same) << ',' << fmt(c.se_bias_vs_same) << ','
       << fmt(c.bias_vs_random) << ',' << fmt(c.se_bias_vs_random) << '\n';
  }
  return os.str();
}

void write_report(const SimReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_file((base / "report.json").string(), report_to_json(report));
  write_file((base / "metrics.csv").string(), metrics_csv(report));
  write_file((base / "criteria.csv").string(), criteria_csv(report));
}

SimConfig sim_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError("config", std::string("JSON parse error: ") + e.what());
  }
  SimConfig c;
  const std::string mdl = j.value("model", "A");
  if (mdl == "A") c.model = SimModel::A;
  else if (mdl == "B") c.model = SimModel::B;
  else if (mdl == "A_misspecified") c.model = SimModel::AMisspecified;
  else throw ValidationError("model", "must be A, B, or A_misspecified");

  if (j.contains("n")) c.n = j["n"].get<int>();
  if (j.contains("p")) c.p = j["p"].get<int>();
  if (j.contains("reps")) c.reps = j["reps"].get<int>();

  const std::string setting = j.value("setting", "random");
  if (setting == "random") c.x_setting = XSetting::RandomX;
  else if (setting == "fixed") c.x_setting = XSetting::FixedX;
  else throw ValidationError("setting", "must be fixed or random");

  const std::string errors = j.value("errors", "mixture");
  if (errors == "normal") c.error_law = ErrorLawKind::StandardNormal;
  else if (errors == "mixture") c.error_law = ErrorLawKind::NormalMixture;
  else throw ValidationError("errors", "must be normal or mixture");

  c.estimators.clear();
  for (const auto& e : j.value("estimators", std::vector<std::string>{})) {
    if (e == "qmle") c.estimators.push_back(EstimatorKind::QMLE);
    else if (e == "ols") c.estimators.push_back(EstimatorKind::OLS);
    else if (e == "gls") c.estimators.push_back(EstimatorKind::GLS);
    else if (e == "fgls") c.estimators.push_back(EstimatorKind::FGLS);
    else throw ValidationError("estimators", "unknown estimator '" + e + "'");
  }
  c.criteria = j.value("criteria", std::vector<std::string>{});

  const std::string cw = j.value("criteria_weight", "known_v");
  if (cw == "known_v") c.criteria_weight = WeightSpec::Kind::KnownV;
  else if (cw == "identity") c.criteria_weight = WeightSpec::Kind::Identity;
  else throw ValidationError("criteria_weight", "must be known_v or identity");

  c.with_test_errors = j.value("with_test_errors", true);
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("workers")) c.workers = j["workers"].get<int>();
  if (j.contains("max_failure_rate")) {
    c.max_failure_rate = j["max_failure_rate"].get<double>();
  }
  c.validate();
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("path", "cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("path", "cannot write '" + path + "'");
  out << text;
}

}  // namespace io
}  // namespace covreg
