#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "ppca/csv.hpp"
#include "ppca/errors.hpp"
#include "ppca/estimators.hpp"
#include "ppca/faces.hpp"
#include "ppca/population.hpp"
#include "ppca/simulation.hpp"

namespace ppca::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using estimators::Method;
using linalg::Index;

namespace {

/// Output files keyed by name, written together once everything succeeded.
using Outputs = std::map<std::string, std::string>;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t draw_seed() {
  std::random_device rd;
  return (std::uint64_t(rd()) << 32) ^ rd();
}

std::vector<Index> parse_index_list(const std::string& text, const std::string& what) {
  std::vector<Index> out;
  for (double v : csv::parse_number_list(text)) {
    if (v != std::floor(v) || v < 0 || v > 1e12) {
      throw InvalidInput(what + ": '" + csv::format_number(v) + "' is not a nonnegative integer");
    }
    out.push_back(static_cast<Index>(v));
  }
  if (out.empty()) throw InvalidInput(what + ": empty list");
  return out;
}

json input_record(const fs::path& path) {
  const auto abs = fs::absolute(path);
  return {{"path", abs.string()}, {"sha256", sha256_hex(slurp(abs))}};
}

void check_input_record(const json& rec) {
  const std::string path = rec.at("path").get<std::string>();
  if (sha256_hex(slurp(path)) != rec.at("sha256").get<std::string>()) {
    throw InvalidInput("input " + path + " changed since the manifest was written");
  }
}

// ---------------------------------------------------------------- fit

struct FitJob {
  fs::path data;
  Method method = Method::PPCA;
  Index rank = 1;
  std::uint64_t seed = 0;
  bool center = true;

  json to_json() const {
    return {{"data", input_record(data)},
            {"method", std::string(estimators::to_string(method))},
            {"rank", rank},
            {"center", center}};
  }
  static FitJob from_json(const json& j, std::uint64_t seed) {
    check_input_record(j.at("data"));
    FitJob job;
    job.data = j.at("data").at("path").get<std::string>();
    job.method = estimators::parse_method(j.at("method").get<std::string>());
    job.rank = j.at("rank").get<Index>();
    job.center = j.at("center").get<bool>();
    job.seed = seed;
    return job;
  }
};

Outputs run_fit(const FitJob& job) {
  const estimators::DataMatrix x(csv::read_matrix_file(job.data.string()));
  Rng rng = make_stream(job.seed, 0);
  const auto est = estimators::fit(job.method, x, job.rank, rng, {job.center});

  const Index r = std::min(job.rank, est.components());
  std::ostringstream values, vectors;
  values << "index,value\n";
  for (Index j = 0; j < est.components(); ++j) {
    values << (j + 1) << ',' << csv::format_number(est.eigenvalues(j)) << '\n';
  }
  csv::write_matrix(vectors, est.eigenvectors.leftCols(r));
  Outputs out{{"eigenvalues.csv", values.str()}, {"eigenvectors.csv", vectors.str()}};
  if (est.any_degenerate()) {
    std::ostringstream flags;
    flags << "index\n";
    for (std::size_t j = 0; j < est.degenerate.size(); ++j)
      if (est.degenerate[j]) flags << (j + 1) << '\n';
    out["degenerate.csv"] = flags.str();
  }
  return out;
}

// ----------------------------------------------------------- simulate

/// Parsed simulation config: the base fields plus the (ν, π) grid.
struct SimulateJob {
  simulation::SimulationConfig base;
  std::vector<double> nus;
  std::vector<double> pis;
  bool svg = true;

  json to_json() const {
    json methods = json::array();
    for (Method m : base.methods) methods.push_back(std::string(estimators::to_string(m)));
    json nu_list = json::array();
    for (double v : nus) {
      if (std::isinf(v))
        nu_list.push_back("inf");
      else
        nu_list.push_back(v);
    }
    return {{"schema_version", 1}, {"n", base.n},          {"p", base.p},
            {"r", base.r},         {"nu", nu_list},        {"pi", pis},
            {"q_grid", base.q_grid}, {"replicates", base.replicates}, {"methods", methods},
            {"svg", svg}};
  }
};

[[noreturn]] void field_error(const std::string& path, const std::string& msg) {
  throw InvalidInput(path + ": " + msg);
}

Index read_int(const json& obj, const std::string& key, Index fallback, Index lo) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) field_error("$." + key, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < lo) field_error("$." + key, "must be at least " + std::to_string(lo));
  return static_cast<Index>(x);
}

double read_nu(const json& v, const std::string& path) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "gaussian") return std::numeric_limits<double>::infinity();
    field_error(path, "expected a number or \"inf\"");
  }
  if (!v.is_number()) field_error(path, "expected a number or \"inf\"");
  const double nu = v.get<double>();
  if (!(nu > 2)) field_error(path, "degrees of freedom must exceed 2");
  return nu;
}

double read_pi(const json& v, const std::string& path) {
  if (!v.is_number()) field_error(path, "expected a number");
  const double pi = v.get<double>();
  if (!(pi >= 0 && pi < 1)) field_error(path, "contamination fraction must lie in [0, 1)");
  return pi;
}

template <typename F>
std::vector<double> read_scalar_or_list(const json& obj, const std::string& key, double fallback,
                                        F read_one) {
  if (!obj.contains(key)) return {fallback};
  const auto& v = obj.at(key);
  if (!v.is_array()) return {read_one(v, "$." + key)};
  if (v.empty()) field_error("$." + key, "list is empty");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(read_one(v[i], "$." + key + "[" + std::to_string(i) + "]"));
  return out;
}

SimulateJob parse_simulate_config(const json& cfg, bool paper_scale) {
  if (!cfg.is_object()) field_error("$", "config must be a JSON object");
  static const std::vector<std::string> known{"schema_version", "n", "p", "r", "nu", "pi",
                                              "q_grid", "replicates", "seed", "methods", "svg"};
  for (const auto& [key, _] : cfg.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) field_error("$." + key, "unknown field");
  }
  if (!cfg.contains("schema_version")) field_error("$.schema_version", "missing");
  if (cfg.at("schema_version") != 1) field_error("$.schema_version", "unsupported version (expected 1)");

  SimulateJob job;
  auto& c = job.base;
  c.n = read_int(cfg, "n", paper_scale ? 500 : 200, 4);
  c.p = read_int(cfg, "p", paper_scale ? 250 : 100, 2);
  c.r = read_int(cfg, "r", 5, 1);
  c.replicates = read_int(cfg, "replicates", paper_scale ? 200 : 100, 1);
  job.nus = read_scalar_or_list(cfg, "nu", 5.0, read_nu);
  job.pis = read_scalar_or_list(cfg, "pi", 0.0, read_pi);
  if (c.r >= c.p) field_error("$.r", "must be smaller than p");

  if (cfg.contains("q_grid")) {
    const auto& g = cfg.at("q_grid");
    if (!g.is_array() || g.empty()) field_error("$.q_grid", "expected a nonempty integer list");
    c.q_grid.clear();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string path = "$.q_grid[" + std::to_string(i) + "]";
      if (!g[i].is_number_integer()) field_error(path, "expected an integer");
      const auto q = g[i].get<std::int64_t>();
      if (q < c.r || q > c.p) field_error(path, "must lie in [r, p]");
      c.q_grid.push_back(static_cast<Index>(q));
    }
  } else {
    c.q_grid = simulation::SimulationConfig::default_q_grid(c.r, c.p);
  }
  if (c.max_q() > c.n - 1) field_error("$.q_grid", "largest q must not exceed n - 1");

  if (cfg.contains("methods")) {
    const auto& m = cfg.at("methods");
    if (!m.is_array() || m.empty()) field_error("$.methods", "expected a nonempty list");
    c.methods.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string path = "$.methods[" + std::to_string(i) + "]";
      if (!m[i].is_string()) field_error(path, "expected a method name");
      try {
        c.methods.push_back(estimators::parse_method(m[i].get<std::string>()));
      } catch (const InvalidInput& e) {
        field_error(path, e.what());
      }
    }
  }
  if (cfg.contains("svg")) {
    if (!cfg.at("svg").is_boolean()) field_error("$.svg", "expected true or false");
    job.svg = cfg.at("svg").get<bool>();
  }
  for (double nu : job.nus) {
    for (double pi : job.pis) {
      auto probe = c;
      probe.nu = nu;
      probe.pi = pi;
      probe.validate();
    }
  }
  return job;
}

std::string cell_tag(double nu, double pi) {
  return "nu" + csv::format_number(nu) + "_pi" + csv::format_number(pi);
}

Outputs run_simulate(const SimulateJob& job, std::uint64_t seed, unsigned threads) {
  std::ostringstream agg, failures;
  failures << "nu,pi,replicate,method,error\n";
  Outputs out;
  bool first = true;
  for (double nu : job.nus) {
    for (double pi : job.pis) {
      auto config = job.base;
      config.nu = nu;
      config.pi = pi;
      config.seed = seed;
      config.threads = threads;
      const auto study = simulation::run_study(config);
      simulation::write_aggregate_csv(agg, study, first);
      first = false;
      std::ostringstream raw;
      simulation::write_raw_csv(raw, study);
      out["raw_" + cell_tag(nu, pi) + ".csv"] = raw.str();
      if (job.svg) out["xi_" + cell_tag(nu, pi) + ".svg"] = simulation::xi_plot_svg(study);
      for (const auto& f : study.failures) {
        std::string msg = f.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        failures << csv::format_number(nu) << ',' << csv::format_number(pi) << ',' << f.replicate
                 << ',' << estimators::to_string(f.method) << ',' << msg << '\n';
      }
    }
  }
  out["aggregate.csv"] = agg.str();
  out["failures.csv"] = failures.str();
  return out;
}

// ------------------------------------------------------------ perturb

struct PerturbJob {
  std::optional<fs::path> model_path;
  std::optional<fs::path> x_path;
  std::vector<double> eps;
  std::optional<std::pair<double, double>> example;

  json to_json() const {
    json j = json::object();
    j["model"] = model_path ? input_record(*model_path) : json(nullptr);
    j["x"] = x_path ? input_record(*x_path) : json(nullptr);
    j["eps"] = eps;
    j["example"] = example ? json::array({example->first, example->second}) : json(nullptr);
    return j;
  }
  static PerturbJob from_json(const json& j) {
    PerturbJob job;
    if (!j.at("model").is_null()) {
      check_input_record(j.at("model"));
      job.model_path = j.at("model").at("path").get<std::string>();
    }
    if (!j.at("x").is_null()) {
      check_input_record(j.at("x"));
      job.x_path = j.at("x").at("path").get<std::string>();
    }
    job.eps = j.at("eps").get<std::vector<double>>();
    if (!j.at("example").is_null())
      job.example = std::make_pair(j.at("example")[0].get<double>(), j.at("example")[1].get<double>());
    return job;
  }
};

population::SpectralModel load_model(const fs::path& path) {
  json j;
  try {
    j = json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    const auto values = j.at("eigenvalues").get<std::vector<double>>();
    const auto p = static_cast<Index>(values.size());
    const Eigen::VectorXd lambda = Eigen::Map<const Eigen::VectorXd>(values.data(), p);
    const Index r = j.at("rank").get<Index>();
    if (!j.contains("eigenvectors")) return population::SpectralModel::diagonal(lambda, r);
    const auto rows = j.at("eigenvectors").get<std::vector<std::vector<double>>>();
    if (static_cast<Index>(rows.size()) != p) throw FormatError("$.eigenvectors: expected p rows");
    Eigen::MatrixXd gamma(p, p);
    for (Index a = 0; a < p; ++a) {
      if (static_cast<Index>(rows[std::size_t(a)].size()) != p) {
        throw FormatError("$.eigenvectors[" + std::to_string(a) + "]: expected p entries");
      }
      for (Index b = 0; b < p; ++b) gamma(a, b) = rows[std::size_t(a)][std::size_t(b)];
    }
    return population::SpectralModel(lambda, gamma, r);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Eigen::VectorXd load_vector(const fs::path& path) {
  const Eigen::MatrixXd m = csv::read_matrix_file(path.string());
  if (m.rows() != 1 && m.cols() != 1) throw FormatError(path.string() + ": expected a single row or column");
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Outputs run_perturb(const PerturbJob& job) {
  Outputs out;
  if (job.model_path) {
    const auto model = load_model(*job.model_path);
    model.require_distinct();
    const Eigen::VectorXd x = load_vector(*job.x_path);
    if (x.size() != model.p()) throw InvalidInput("outlier length does not match the model dimension");
    for (double e : job.eps) population::PerturbationScenario(model, x, e);

    const Index p = model.p(), r = model.rank();
    const bool perpendicular =
        (model.leading_eigenvectors().transpose() * x).norm() <= 1e-10 * x.norm();
    std::ostringstream rep;
    rep << "quantity,j,k,eps,numeric,theory,abs_gap,rel_gap\n";
    auto row = [&](const std::string& what, std::optional<Index> j, std::optional<Index> k,
                   const population::TheoryReport& t) {
      rep << what << ',' << (j ? std::to_string(*j + 1) : "") << ','
          << (k ? std::to_string(*k + 1) : "") << ',' << csv::format_number(t.eps) << ','
          << csv::format_number(t.numeric) << ',' << csv::format_number(t.theory) << ','
          << csv::format_number(t.abs_gap) << ',' << csv::format_number(t.rel_gap) << '\n';
    };
    for (double e : job.eps) {
      const population::PerturbationScenario scn(model, x, e);
      for (Index j = 0; j < r; ++j) {
        for (Index k = r; k < p; ++k) {
          const double first = population::rho_first_order_theory(model, x, e, j, k);
          row("rho_pca", j, k, population::TheoryReport::make(population::perturbed_rho_pca(scn, j, k), first, e));
          row("rho_ppca", j, k, population::TheoryReport::make(population::perturbed_rho_ppca(scn, j, k), first, e));
          row("tau_jk", j, k,
              population::TheoryReport::make(population::tau_jk_numeric(scn, j, k),
                                             population::tau_jk_theory(model, x, e, j, k), e));
        }
      }
      const double tau = population::tau_numeric(scn);
      row("tau", std::nullopt, std::nullopt,
          population::TheoryReport::make(tau, population::tau_theory(model, x, e), e));
      if (perpendicular) {
        row("tau_perpendicular", std::nullopt, std::nullopt,
            population::TheoryReport::make(tau, population::tau_perpendicular_theory(model, x, e), e));
      }
      for (Index j = 0; j < p; ++j) {
        const double th = population::eigvec_perturbation_theory(model, x, e, j);
        row("eigvec_pca", j, std::nullopt,
            population::TheoryReport::make(population::eigvec_inner_pca(scn, j), th, e));
        row("eigvec_ppca", j, std::nullopt,
            population::TheoryReport::make(population::eigvec_inner_ppca(scn, j), th, e));
      }
    }
    out["theory_report.csv"] = rep.str();

    std::ostringstream summary;
    summary << "quantity,value\n"
            << "mahalanobis_sq," << csv::format_number(population::mahalanobis_sq(model, x)) << '\n'
            << "delta," << csv::format_number(population::delta(model, x)) << '\n'
            << "delta_prime," << csv::format_number(population::delta_prime(model, x)) << '\n';
    out["summary.csv"] = summary.str();
  }
  if (job.example) {
    const auto t = population::flip_thresholds(job.example->first, job.example->second);
    std::ostringstream f;
    f << "a,eps,eta_pca,eta_cdm,product_more_robust\n"
      << csv::format_number(job.example->first) << ',' << csv::format_number(job.example->second)
      << ',' << csv::format_number(t.eta_pca) << ',' << csv::format_number(t.eta_cdm) << ','
      << (t.product_more_robust ? "true" : "false") << '\n';
    out["flip_thresholds.csv"] = f.str();
  }
  return out;
}

// -------------------------------------------------------------- faces

struct FacesJob {
  fs::path corpus;
  std::string scheme = "none";
  double fraction = 0.1;
  Index count = 20;
  std::vector<Index> ranks;
  std::vector<Index> indices;
  std::vector<Method> methods{Method::PCA, Method::PPCA};

  json to_json() const {
    json m = json::array();
    for (Method x : methods) m.push_back(std::string(estimators::to_string(x)));
    return {{"corpus", input_record(corpus)}, {"scheme", scheme}, {"fraction", fraction},
            {"count", count}, {"ranks", ranks}, {"indices", indices}, {"methods", m}};
  }
  static FacesJob from_json(const json& j) {
    check_input_record(j.at("corpus"));
    FacesJob job;
    job.corpus = j.at("corpus").at("path").get<std::string>();
    job.scheme = j.at("scheme").get<std::string>();
    job.fraction = j.at("fraction").get<double>();
    job.count = j.at("count").get<Index>();
    job.ranks = j.at("ranks").get<std::vector<Index>>();
    job.indices = j.at("indices").get<std::vector<Index>>();
    job.methods.clear();
    for (const auto& m : j.at("methods")) job.methods.push_back(estimators::parse_method(m.get<std::string>()));
    return job;
  }
};

std::string image_name(const std::string& stem, Index index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%04lld.pgm", static_cast<long long>(index));
  return stem + buf;
}

Outputs run_faces(const FacesJob& job, std::uint64_t seed) {
  if (job.scheme != "none" && job.scheme != "s1" && job.scheme != "s2") {
    throw InvalidInput("--scheme must be one of none, s1, s2");
  }
  const auto clean = faces::load_corpus(job.corpus);
  for (Index i : job.indices) {
    if (i >= clean.n()) {
      throw InvalidInput("image index " + std::to_string(i) + " out of range (corpus has " +
                         std::to_string(clean.n()) + " images)");
    }
  }
  for (Method m : job.methods) {
    if (m == Method::CDMPCA) throw InvalidInput("faces supports the pca and ppca methods");
  }

  Rng rng = make_stream(seed, 1);
  faces::ImageCorpus data = clean;
  std::vector<Index> contaminated;
  if (job.scheme == "s1") {
    auto s1 = faces::contaminate_s1(clean, job.fraction, rng);
    data = std::move(s1.corpus);
    contaminated = std::move(s1.contaminated);
  } else if (job.scheme == "s2") {
    data = faces::contaminate_s2(clean, job.count, rng);
  }
  const Index limit = std::min(data.n() - 1, data.pixels());
  for (Index r : job.ranks) {
    if (r < 1 || r > limit) {
      throw InvalidInput("rank " + std::to_string(r) + " outside [1, " + std::to_string(limit) + "]");
    }
  }

  const Index h = clean.height, w = clean.width;
  Outputs out;
  std::vector<faces::SheetRow> sheet;
  std::optional<Eigen::RowVectorXd> mean;
  std::vector<faces::SheetRow> recon_rows;
  for (Method m : job.methods) {
    const Index top = *std::max_element(job.ranks.begin(), job.ranks.end());
    const auto proj = faces::fit_projection(data, m, top, seed);
    if (!mean) mean = proj.mean;
    std::string stem(estimators::to_string(m));
    std::transform(stem.begin(), stem.end(), stem.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (Index r : job.ranks) {
      const faces::Projection sub{proj.mean, proj.basis.leftCols(r)};
      faces::SheetRow row{std::string(estimators::to_string(m)) + " r=" + std::to_string(r), {}};
      for (Index i : job.indices) {
        const Eigen::RowVectorXd dev = data.rows.row(i) - sub.mean;
        const Eigen::VectorXd rec = (sub.mean + (dev * sub.basis) * sub.basis.transpose()).transpose();
        out[image_name(stem + "_r" + std::to_string(r), i)] =
            faces::encode_pgm(rec, h, w, clean.pixel_max);
        row.tiles.push_back({"#" + std::to_string(i), rec});
      }
      recon_rows.push_back(std::move(row));
    }
  }
  const Eigen::VectorXd mean_img = mean->transpose();
  out["mean.pgm"] = faces::encode_pgm(mean_img, h, w, clean.pixel_max);
  sheet.push_back({"mean", {{"mean face", mean_img}}});
  for (auto& row : recon_rows) sheet.push_back(std::move(row));
  faces::SheetRow originals{"original", {}};
  for (Index i : job.indices) {
    const Eigen::VectorXd img = clean.rows.row(i).transpose();
    out[image_name("original", i)] = faces::encode_pgm(img, h, w, clean.pixel_max);
    originals.tiles.push_back({"#" + std::to_string(i), img});
  }
  sheet.push_back(std::move(originals));
  out["contact_sheet.svg"] = faces::contact_sheet_svg(sheet, h, w, clean.pixel_max);
  if (job.scheme == "s1") {
    std::ostringstream c;
    c << "index\n";
    for (Index i : contaminated) c << i << '\n';
    out["contaminated.csv"] = c.str();
  }
  return out;
}

// ------------------------------------------------------- synth-faces

struct SynthJob {
  Index n = 120;
  Index height = 32;
  Index width = 32;

  json to_json() const { return {{"n", n}, {"height", height}, {"width", width}}; }
  static SynthJob from_json(const json& j) {
    return {j.at("n").get<Index>(), j.at("height").get<Index>(), j.at("width").get<Index>()};
  }
};

Outputs run_synth(const SynthJob& job, std::uint64_t seed) {
  const auto corpus = faces::synthetic_corpus(job.n, job.height, job.width, seed);
  std::ostringstream rows;
  csv::write_matrix(rows, corpus.rows);
  json meta = {{"n", corpus.n()}, {"height", corpus.height}, {"width", corpus.width},
               {"pixel_max", corpus.pixel_max}};
  return {{"faces.csv", rows.str()}, {"faces.json", meta.dump(2) + "\n"}};
}

// ----------------------------------------------------------- plumbing

void write_outputs(const fs::path& dir, const std::string& subcommand, const json& config,
                   std::uint64_t seed, const Outputs& outputs) {
  fs::create_directories(dir);
  json digests = json::object();
  for (const auto& [name, bytes] : outputs) {
    std::ofstream f(dir / name, std::ios::binary);
    f << bytes;
    if (!f) throw Error("cannot write " + (dir / name).string());
    digests[name] = sha256_hex(bytes);
  }
  const json manifest = {{"tool", "ppca"},    {"version", kVersion}, {"subcommand", subcommand},
                         {"seed", seed},      {"config", config},    {"outputs", digests}};
  std::ofstream m(dir / "manifest.json", std::ios::binary);
  m << manifest.dump(2) << '\n';
  if (!m) throw Error("cannot write manifest");
}

/// Re-executes a manifest's subcommand. Returns the fresh outputs.
Outputs replay_outputs(const json& manifest, unsigned threads) {
  const auto sub = manifest.at("subcommand").get<std::string>();
  const auto seed = manifest.at("seed").get<std::uint64_t>();
  const auto& cfg = manifest.at("config");
  if (sub == "fit") return run_fit(FitJob::from_json(cfg, seed));
  if (sub == "simulate") return run_simulate(parse_simulate_config(cfg, false), seed, threads);
  if (sub == "perturb") return run_perturb(PerturbJob::from_json(cfg));
  if (sub == "faces") return run_faces(FacesJob::from_json(cfg), seed);
  if (sub == "synth-faces") return run_synth(SynthJob::from_json(cfg), seed);
  throw FormatError("manifest names unknown subcommand '" + sub + "'");
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Product-PCA estimators, perturbation theory checks and simulation studies", "ppca"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string out_dir;
  std::optional<std::uint64_t> seed;

  auto* fit = app.add_subcommand("fit", "Estimate eigenvalues and eigenvectors of a data matrix");
  std::string fit_data, fit_method = "ppca";
  Index fit_rank = 1;
  bool no_center = false;
  fit->add_option("data", fit_data, "Headerless numeric CSV, one observation per row")->required();
  fit->add_option("--method", fit_method, "pca, ppca or cdm");
  fit->add_option("--rank", fit_rank, "Target rank r")->required();
  fit->add_option("--seed", seed, "Seed for the random split");
  fit->add_flag("--no-center", no_center, "Do not subtract half means");
  fit->add_option("--out", out_dir)->required();

  auto* sim = app.add_subcommand("simulate", "Run a subspace-recovery simulation study");
  std::string sim_config;
  unsigned threads = 1;
  bool paper_scale = false;
  sim->add_option("config", sim_config, "JSON study configuration")->required();
  sim->add_option("--seed", seed, "Overrides the config seed");
  sim->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  sim->add_flag("--paper-scale", paper_scale, "Defaults n=500, p=250, 200 replicates");
  sim->add_option("--out", out_dir)->required();

  auto* pert = app.add_subcommand("perturb", "Compare perturbed functionals with their expansions");
  std::string pert_model, pert_x, pert_eps = "0.01,0.001", pert_example;
  pert->add_option("model", pert_model, "JSON model {eigenvalues, rank, eigenvectors?}");
  pert->add_option("--x", pert_x, "Outlier vector CSV");
  pert->add_option("--eps", pert_eps, "Comma-separated contamination fractions");
  pert->add_option("--example", pert_example, "a,eps for the two-direction flip thresholds");
  pert->add_option("--out", out_dir)->required();

  auto* fac = app.add_subcommand("faces", "Reconstruct corpus images at several ranks");
  std::string fac_corpus, fac_scheme = "none", fac_ranks, fac_indices, fac_methods = "pca,ppca";
  double fac_fraction = 0.1;
  Index fac_count = 20;
  fac->add_option("corpus", fac_corpus, "Corpus CSV with a JSON sidecar")->required();
  fac->add_option("--scheme", fac_scheme, "none, s1 or s2");
  fac->add_option("--fraction", fac_fraction, "S1 share of noisy images");
  fac->add_option("--count", fac_count, "S2 number of noise images");
  fac->add_option("--ranks", fac_ranks, "Comma-separated ranks")->required();
  fac->add_option("--indices", fac_indices, "Comma-separated image indices (0-based)")->required();
  fac->add_option("--methods", fac_methods, "Comma-separated subset of pca,ppca");
  fac->add_option("--seed", seed);
  fac->add_option("--out", out_dir)->required();

  auto* syn = app.add_subcommand("synth-faces", "Write a synthetic face corpus");
  SynthJob synth;
  syn->add_option("--n", synth.n);
  syn->add_option("--height", synth.height);
  syn->add_option("--width", synth.width);
  syn->add_option("--seed", seed);
  syn->add_option("--out", out_dir)->required();

  auto* rep = app.add_subcommand("replay", "Re-run a manifest and verify output digests");
  std::string rep_manifest;
  rep->add_option("manifest", rep_manifest)->required();
  rep->add_option("--threads", threads)->check(CLI::PositiveNumber);
  rep->add_option("--out", out_dir, "Also write the fresh outputs here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    return kBadInput;
  }

  try {
    if (!out_dir.empty() && fs::exists(out_dir) && !fs::is_directory(out_dir)) {
      throw InvalidInput("--out " + out_dir + " exists and is not a directory");
    }
    const std::uint64_t used_seed = seed ? *seed : draw_seed();
    if (fit->parsed()) {
      FitJob job{fit_data, estimators::parse_method(fit_method), fit_rank, used_seed, !no_center};
      if (job.rank < 1) throw InvalidInput("--rank must be positive");
      const json cfg = job.to_json();
      write_outputs(out_dir, "fit", cfg, used_seed, run_fit(job));
    } else if (sim->parsed()) {
      json cfg;
      try {
        cfg = json::parse(slurp(sim_config));
      } catch (const json::exception& e) {
        throw FormatError(sim_config + ": " + e.what());
      }
      std::uint64_t s = used_seed;
      if (!seed && cfg.contains("seed")) {
        if (!cfg.at("seed").is_number_unsigned()) field_error("$.seed", "expected a nonnegative integer");
        s = cfg.at("seed").get<std::uint64_t>();
      }
      const auto job = parse_simulate_config(cfg, paper_scale);
      write_outputs(out_dir, "simulate", job.to_json(), s, run_simulate(job, s, threads));
    } else if (pert->parsed()) {
      PerturbJob job;
      if (!pert_model.empty()) {
        if (pert_x.empty()) throw InvalidInput("--x is required with a model");
        job.model_path = pert_model;
        job.x_path = pert_x;
      } else if (!pert_x.empty()) {
        throw InvalidInput("--x needs a model file");
      }
      job.eps = csv::parse_number_list(pert_eps);
      if (!pert_example.empty()) {
        const auto v = csv::parse_number_list(pert_example);
        if (v.size() != 2) throw InvalidInput("--example expects a,eps");
        job.example = std::make_pair(v[0], v[1]);
      }
      if (!job.model_path && !job.example) throw InvalidInput("nothing to do: give a model or --example");
      const json cfg = job.to_json();
      write_outputs(out_dir, "perturb", cfg, used_seed, run_perturb(job));
    } else if (fac->parsed()) {
      FacesJob job;
      job.corpus = fac_corpus;
      job.scheme = fac_scheme;
      job.fraction = fac_fraction;
      job.count = fac_count;
      job.ranks = parse_index_list(fac_ranks, "--ranks");
      job.indices = parse_index_list(fac_indices, "--indices");
      job.methods.clear();
      std::stringstream ms(fac_methods);
      for (std::string name; std::getline(ms, name, ',');) job.methods.push_back(estimators::parse_method(name));
      const json cfg = job.to_json();
      write_outputs(out_dir, "faces", cfg, used_seed, run_faces(job, used_seed));
    } else if (syn->parsed()) {
      write_outputs(out_dir, "synth-faces", synth.to_json(), used_seed, run_synth(synth, used_seed));
    } else if (rep->parsed()) {
      json manifest;
      try {
        manifest = json::parse(slurp(rep_manifest));
      } catch (const json::exception& e) {
        throw FormatError(rep_manifest + ": " + e.what());
      }
      Outputs fresh;
      try {
        fresh = replay_outputs(manifest, threads);
      } catch (const json::exception& e) {
        throw FormatError(rep_manifest + ": " + e.what());
      }
      const auto& expected = manifest.at("outputs");
      bool same = expected.size() == fresh.size();
      for (const auto& [name, bytes] : fresh) {
        const bool match = expected.contains(name) && expected.at(name).get<std::string>() == sha256_hex(bytes);
        out << (match ? "match    " : "MISMATCH ") << name << '\n';
        same = same && match;
      }
      if (!out_dir.empty()) {
        write_outputs(out_dir, manifest.at("subcommand").get<std::string>(), manifest.at("config"),
                      manifest.at("seed").get<std::uint64_t>(), fresh);
      }
      if (!same) {
        err << "error: replay does not reproduce the recorded outputs\n";
        return kFailure;
      }
    }
    return kOk;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace ppca::cli
