#pragma once

// L-shape convergence study: adaptive runs per (p, element), reference
// solutions, error data files, SVG convergence plots and a text summary.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "plfem/adapt.hpp"
#include "plfem/properties.hpp"

namespace plfem {

struct ExperimentSpec {
  std::vector<double> p_values{1.1, 10.0};
  std::vector<ElementKind> elements{ElementKind::Lagrange, ElementKind::CrouzeixRaviart};
  double theta = 0.3;
  std::size_t max_ndof = 50000;
  std::filesystem::path out_dir = "results";
  unsigned long seed = 1;  // property sweeps only; the adaptive runs are deterministic
  unsigned jobs = 1;        // (p, element) runs executed concurrently

  void validate() const {
    if (p_values.empty()) throw std::invalid_argument("experiment: empty p list");
    if (elements.empty()) throw std::invalid_argument("experiment: empty element list");
    for (double p : p_values)
      if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("experiment: p must be > 1");
    if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("experiment: theta must lie in (0, 1]");
    if (jobs == 0) throw std::invalid_argument("experiment: jobs must be positive");
  }
};

/// Shortest decimal form of p as used in file names: 1.1, 2, 10.
inline std::string format_p(double p) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, p);
  return std::string(buf, res.ptr);
}

inline std::string run_tag(double p, ElementKind kind) {
  return "p" + format_p(p) + "CR_" + (kind == ElementKind::CrouzeixRaviart ? "True" : "False");
}

inline std::string error_file_name(double p, ElementKind kind) { return "Error_" + run_tag(p, kind) + ".dat"; }

inline std::string accumulated_file_name(double p, ElementKind kind) {
  return "AccumulatedDofError_" + run_tag(p, kind) + ".dat";
}

using DataRows = std::vector<std::pair<double, double>>;  // (ndof, relat_error)

inline void write_dat(std::ostream& os, const DataRows& rows) {
  const auto old = os.precision(12);
  for (const auto& [n, e] : rows) os << static_cast<long long>(n) << ' ' << e << '\n';
  os.precision(old);
}

inline void write_dat(const std::filesystem::path& path, const DataRows& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_dat(os, rows);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

inline DataRows read_dat(std::istream& is) {
  DataRows rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double n = 0.0, e = 0.0;
    if (!(ls >> n >> e)) throw std::runtime_error("data file: malformed row '" + line + "'");
    rows.emplace_back(n, e);
  }
  return rows;
}

inline DataRows read_dat(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_dat(is);
}

/// Least-squares slope of log(error) against log(ndof) over the last half
/// of the rows.
inline double fit_slope(const DataRows& rows) {
  if (rows.size() < 4) throw std::invalid_argument("fit_slope: need at least 4 rows");
  const std::size_t first = rows.size() / 2;
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(rows.size() - first);
  for (std::size_t i = first; i < rows.size(); ++i) {
    if (!(rows[i].first > 0.0) || !(rows[i].second > 0.0))
      throw std::invalid_argument("fit_slope: rows must be positive");
    mx += std::log(rows[i].first);
    my += std::log(rows[i].second);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = first; i < rows.size(); ++i) {
    const double dx = std::log(rows[i].first) - mx;
    sxy += dx * (std::log(rows[i].second) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_slope: ndof column is constant");
  return sxy / sxx;
}

inline double fit_slope(const std::filesystem::path& path) { return fit_slope(read_dat(path)); }

struct SvgCurve {
  std::string label;
  DataRows rows;
};

/// Log-log plot of the curves plus dashed guide lines c n^-1/2 and c n^-1
/// anchored at the first point of the first curve.
inline void write_svg(std::ostream& os, const std::string& title, const std::string& xlabel,
                      const std::vector<SvgCurve>& curves) {
  constexpr double W = 640, H = 480, L = 80, R = 170, T = 40, B = 60;
  double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
  for (const auto& c : curves)
    for (const auto& [x, y] : c.rows) {
      if (!(x > 0.0) || !(y > 0.0)) continue;
      x0 = std::min(x0, std::log10(x));
      x1 = std::max(x1, std::log10(x));
      y0 = std::min(y0, std::log10(y));
      y1 = std::max(y1, std::log10(y));
    }
  if (!(x1 >= x0)) x0 = 0, x1 = 1;
  if (!(y1 >= y0)) y0 = 0, y1 = 1;
  x0 = std::floor(x0), x1 = std::max(std::ceil(x1), x0 + 1);
  y0 = std::floor(y0), y1 = std::max(std::ceil(y1), y0 + 1);
  auto px = [&](double lx) { return L + (lx - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double ly) { return H - B - (ly - y0) / (y1 - y0) * (H - T - B); };

  const auto old = os.precision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<defs><clipPath id=\"plot\"><rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R
     << "\" height=\"" << H - T - B << "\"/></clipPath></defs>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = static_cast<int>(x0); k <= static_cast<int>(x1); ++k)
    os << "<line x1=\"" << px(k) << "\" y1=\"" << H - B << "\" x2=\"" << px(k) << "\" y2=\"" << T
       << "\" stroke=\"#dddddd\"/>\n<text x=\"" << px(k) << "\" y=\"" << H - B + 18
       << "\" text-anchor=\"middle\" font-size=\"12\">1e" << k << "</text>\n";
  for (int k = static_cast<int>(y0); k <= static_cast<int>(y1); ++k)
    os << "<line x1=\"" << L << "\" y1=\"" << py(k) << "\" x2=\"" << W - R << "\" y2=\"" << py(k)
       << "\" stroke=\"#dddddd\"/>\n<text x=\"" << L - 6 << "\" y=\"" << py(k) + 4
       << "\" text-anchor=\"end\" font-size=\"12\">1e" << k << "</text>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\" font-size=\"13\">"
     << xlabel << "</text>\n";
  os << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
     << (T + H - B) / 2 << ")\">relative error</text>\n";

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  int legend = 0;
  auto legend_entry = [&](const std::string& label, const char* color, bool dashed) {
    const double ly = T + 14 + 20 * legend++;
    os << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 40 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"6,4\"" : "")
       << "/>\n<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << label << "</text>\n";
  };
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const char* color = colors[ci % 6];
    os << "<polyline clip-path=\"url(#plot)\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : curves[ci].rows)
      if (x > 0.0 && y > 0.0) os << px(std::log10(x)) << ',' << py(std::log10(y)) << ' ';
    os << "\"/>\n";
    legend_entry(curves[ci].label, color, false);
  }
  if (!curves.empty() && !curves.front().rows.empty()) {
    const auto [ax, ay] = curves.front().rows.front();
    if (ax > 0.0 && ay > 0.0) {
      const std::pair<double, const char*> guides[] = {{-0.5, "ndof^-1/2"}, {-1.0, "ndof^-1"}};
      for (const auto& [rate, label] : guides) {
        const double la = std::log10(ax), lb = std::log10(ay);
        os << "<line clip-path=\"url(#plot)\" x1=\"" << px(x0) << "\" y1=\"" << py(lb + rate * (x0 - la)) << "\" x2=\""
           << px(x1) << "\" y2=\"" << py(lb + rate * (x1 - la)) << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
        legend_entry(label, "gray", true);
      }
    }
  }
  os << "</svg>\n";
  os.precision(old);
}

/// Cumulative ndof column, as plotted for the accumulated error figures.
inline DataRows accumulate_ndof(const DataRows& rows) {
  DataRows out;
  double acc = 0.0;
  for (const auto& [n, e] : rows) out.emplace_back(acc += n, e);
  return out;
}

/// Everything produced by one (p, element) run.
struct RunRecord {
  double p = 2.0;
  ElementKind element = ElementKind::Lagrange;
  AdaptResult result;
  Reference reference;
  ErrorHistory errors;
  DataRows error_rows;        // REFINE events, pre-refinement iterate
  DataRows accumulated_rows;  // every solved iterate
};

inline AdaptConfig config_for(double p, ElementKind kind, double theta, std::size_t max_ndof) {
  AdaptConfig cfg;
  cfg.p = p;
  cfg.element = kind;
  cfg.theta = theta;
  cfg.max_ndof = max_ndof;
  return cfg;
}

inline RunRecord run_case(const AdaptConfig& cfg, const Problem& problem = lshape_problem()) {
  RunRecord rec;
  rec.p = cfg.p;
  rec.element = cfg.element;
  rec.result = adaptive_solve(cfg, problem);
  rec.reference = compute_reference(rec.result.final_state, cfg, problem);
  rec.errors = attach_reports(rec.result, rec.reference.state.u, cfg, problem);
  for (const auto& ev : rec.result.log.events)
    if (ev.action == Action::Refine) rec.error_rows.emplace_back(static_cast<double>(ev.ndof), ev.report->rel_error2);
  for (std::size_t i = 0; i < rec.result.iterates.size(); ++i)
    if (rec.result.iterates[i].solved)
      rec.accumulated_rows.emplace_back(static_cast<double>(rec.errors.iterates[i].ndof),
                                        rec.errors.iterates[i].rel_error2);
  return rec;
}

struct RunSummary {
  double p = 2.0;
  ElementKind element = ElementKind::Lagrange;
  std::size_t events = 0, kacanov = 0, relax_minus = 0, relax_plus = 0, refine = 0;
  std::size_t final_ndof = 0, reference_ndof = 0;
  RelaxationInterval final_eps, reference_eps;
  double slope_squared = std::numeric_limits<double>::quiet_NaN();
  double final_rel_error2 = std::numeric_limits<double>::quiet_NaN();
};

inline RunSummary summarize(const RunRecord& rec) {
  RunSummary s;
  s.p = rec.p;
  s.element = rec.element;
  const auto& ev = rec.result.log.events;
  s.events = ev.size();
  for (const auto& e : ev) {
    switch (e.action) {
      case Action::Kacanov: ++s.kacanov; break;
      case Action::RelaxMinus: ++s.relax_minus; break;
      case Action::RelaxPlus: ++s.relax_plus; break;
      case Action::Refine: ++s.refine; break;
    }
  }
  s.final_ndof = rec.result.final_state.u.space()->num_free_dofs();
  s.reference_ndof = rec.reference.state.u.space()->num_free_dofs();
  s.final_eps = rec.result.final_state.eps;
  s.reference_eps = rec.reference.state.eps;
  if (rec.error_rows.size() >= 4) s.slope_squared = fit_slope(rec.error_rows);
  if (!rec.error_rows.empty()) s.final_rel_error2 = rec.error_rows.back().second;
  return s;
}

inline void write_summary(std::ostream& os, const ExperimentSpec& spec, const std::vector<RunSummary>& runs) {
  const auto old = os.precision(6);
  os << "# L-shape, f = 2, u = 1 - |y| on the boundary\n"
     << "theta " << spec.theta << "\nmax_ndof " << spec.max_ndof << "\nseed " << spec.seed << '\n';
  for (const auto& r : runs) {
    os << '\n' << "[" << run_tag(r.p, r.element) << "] element " << to_string(r.element) << '\n'
       << "events " << r.events << " (kacanov " << r.kacanov << ", relax_minus " << r.relax_minus << ", relax_plus "
       << r.relax_plus << ", refine " << r.refine << ")\n"
       << "final_ndof " << r.final_ndof << "\nfinal_eps " << r.final_eps.lower() << ' ' << r.final_eps.upper() << '\n'
       << "reference_ndof " << r.reference_ndof << "\nreference_eps " << r.reference_eps.lower() << ' '
       << r.reference_eps.upper() << '\n'
       << "slope_squared_rel_error " << r.slope_squared << "\nslope_unsquared_rel_error " << 0.5 * r.slope_squared
       << "\nlast_rel_error2 " << r.final_rel_error2 << '\n';
  }
  os.precision(old);
}

/// Seeded empirical constants for every p of the spec.
inline void write_constants(std::ostream& os, const std::vector<double>& p_values, unsigned long seed,
                            std::size_t samples = 100000) {
  const auto old = os.precision(6);
  os << "# empirical constants, seed " << seed << ", " << samples << " samples\n";
  for (double p : p_values) {
    const NFunction nf(p);
    const auto b = distance_bands(nf, samples, seed);
    os << "p " << format_p(p) << "  |F(P)-F(Q)|^2/(A(P)-A(Q)).(P-Q) in [" << b.F_over_A.lo << ", " << b.F_over_A.hi
       << "]  |F(P)-F(Q)|^2/phi_|Q|(|P-Q|) in [" << b.F_over_shift.lo << ", " << b.F_over_shift.hi
       << "]  (A(P)-A(Q)).(P-Q)/phi_|Q|(|P-Q|) in [" << b.A_over_shift.lo << ", " << b.A_over_shift.hi
       << "]  poincare " << poincare_constant(nf, samples / 10, seed) << '\n';
  }
  os.precision(old);
}

/// Outputs of one run that survive after its meshes are released.
struct CaseOutput {
  double p = 2.0;
  ElementKind element = ElementKind::Lagrange;
  DataRows error_rows, accumulated_rows;
  std::string run_log;
  RunSummary summary;
};

inline CaseOutput run_case_output(const ExperimentSpec& spec, double p, ElementKind kind) {
  const RunRecord rec = run_case(config_for(p, kind, spec.theta, spec.max_ndof));
  return {p, kind, rec.error_rows, rec.accumulated_rows, rec.result.log.str(), summarize(rec)};
}

/// Runs every (p, element) pair and writes the data files, run logs, plots
/// and summary.txt into spec.out_dir.  Runs share no state, so up to
/// spec.jobs of them execute on separate threads; outputs are written in
/// the fixed (p, element) order afterwards.
inline std::vector<RunSummary> run_experiment(const ExperimentSpec& spec, std::ostream* progress = nullptr) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(spec.out_dir);

  std::vector<std::pair<double, ElementKind>> cases;
  for (double p : spec.p_values)
    for (ElementKind kind : spec.elements) cases.emplace_back(p, kind);
  std::vector<CaseOutput> outputs(cases.size());
  std::vector<std::exception_ptr> failures(cases.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cases.size();) {
      const auto [p, kind] = cases[i];
      if (progress) {
        std::lock_guard lock(progress_mutex);
        *progress << "running p=" << format_p(p) << " element=" << to_string(kind) << std::endl;
      }
      try {
        outputs[i] = run_case_output(spec, p, kind);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const unsigned nthreads = std::min<std::size_t>(spec.jobs, cases.size());
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < nthreads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : failures)
    if (e) std::rethrow_exception(e);

  std::vector<RunSummary> summaries;
  std::map<double, std::vector<const CaseOutput*>> per_p;
  for (const auto& out : outputs) {
    write_dat(spec.out_dir / error_file_name(out.p, out.element), out.error_rows);
    write_dat(spec.out_dir / accumulated_file_name(out.p, out.element), out.accumulated_rows);
    std::ofstream os(spec.out_dir / ("RunLog_" + run_tag(out.p, out.element) + ".txt"));
    os << out.run_log;
    if (!os) throw std::runtime_error("cannot write run log");
    per_p[out.p].push_back(&out);
    summaries.push_back(out.summary);
  }
  for (const auto& [p, runs] : per_p) {
    std::vector<SvgCurve> direct, accumulated;
    for (const CaseOutput* r : runs) {
      const std::string label = r->element == ElementKind::CrouzeixRaviart ? "Crouzeix-Raviart" : "Lagrange";
      direct.push_back({label, r->error_rows});
      accumulated.push_back({label, accumulate_ndof(r->accumulated_rows)});
    }
    std::ofstream a(spec.out_dir / ("Error_p" + format_p(p) + ".svg"));
    write_svg(a, "p = " + format_p(p) + ", iterates before refinement", "ndof", direct);
    std::ofstream b(spec.out_dir / ("AccumulatedDofError_p" + format_p(p) + ".svg"));
    write_svg(b, "p = " + format_p(p) + ", all iterates", "accumulated ndof", accumulated);
    if (!a || !b) throw std::runtime_error("cannot write figures");
  }
  std::ofstream os(spec.out_dir / "summary.txt");
  if (!os) throw std::runtime_error("cannot write summary");
  write_summary(os, spec, summaries);
  os << '\n';
  write_constants(os, spec.p_values, spec.seed);
  return summaries;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline ElementKind parse_element(const std::string& s) {
  if (s == "lagrange" || s == "p1") return ElementKind::Lagrange;
  if (s == "cr" || s == "crouzeix-raviart") return ElementKind::CrouzeixRaviart;
  throw std::invalid_argument("unknown element '" + s + "' (expected lagrange or cr)");
}

inline std::vector<double> parse_p_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : detail::split_list(s)) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad p value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

inline std::vector<ElementKind> parse_element_list(const std::string& s) {
  std::vector<ElementKind> out;
  for (const auto& item : detail::split_list(s)) out.push_back(parse_element(item));
  return out;
}

/// Applies `key = value` lines (keys p, element, theta, max_ndof, out, seed, jobs;
/// '#' starts a comment) on top of `spec`.
inline void apply_config(std::istream& is, ExperimentSpec& spec) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key == "p") spec.p_values = parse_p_list(val);
    else if (key == "element") spec.elements = parse_element_list(val);
    else if (key == "theta") spec.theta = std::stod(val);
    else if (key == "max_ndof" || key == "max-ndof") spec.max_ndof = std::stoul(val);
    else if (key == "out") spec.out_dir = val;
    else if (key == "seed") spec.seed = std::stoul(val);
    else if (key == "jobs") spec.jobs = static_cast<unsigned>(std::stoul(val));
    else throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
}

}  // namespace plfem
