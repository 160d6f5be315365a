#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <cstdint>
#include <vector>

#include "qdtb/cavity.hpp"
#include "qdtb/error.hpp"
#include "qdtb/fitting.hpp"
#include "qdtb/optics.hpp"
#include "qdtb/qcore.hpp"
#include "qdtb/tomo.hpp"

namespace py = pybind11;
using namespace qdtb;

namespace {

using ComplexArray = py::array_t<Complex, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using CountArray = py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>;

// Results cross the boundary as plain dicts through the JSON serializers.
py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

ComplexMatrix matrix_from(const ComplexArray& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw py::value_error("expected a square matrix");
  const auto n = static_cast<std::size_t>(a.shape(0));
  ComplexMatrix m(n);
  auto v = a.unchecked<2>();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) m(r, c) = v(r, c);
  return m;
}

ComplexArray array_from(const ComplexMatrix& m) {
  const auto n = static_cast<py::ssize_t>(m.dim());
  ComplexArray a({n, n});
  auto v = a.mutable_unchecked<2>();
  for (py::ssize_t r = 0; r < n; ++r)
    for (py::ssize_t c = 0; c < n; ++c) v(r, c) = m(r, c);
  return a;
}

DensityMatrix density_from(const ComplexArray& a) { return DensityMatrix(matrix_from(a)); }

CoincidenceHistogram histogram_from(const CountArray& counts, double bin_width_ps, double origin_ps) {
  if (counts.ndim() != 1) throw py::value_error("expected a 1-d count array");
  CoincidenceHistogram h(bin_width_ps, origin_ps, static_cast<std::size_t>(counts.shape(0)));
  auto v = counts.unchecked<1>();
  for (py::ssize_t i = 0; i < counts.shape(0); ++i) h.set(static_cast<std::size_t>(i), v(i));
  return h;
}

std::vector<ScanPoint> scan_from(const DoubleArray& x, const DoubleArray& y, const py::object& sigma) {
  if (x.ndim() != 1 || y.ndim() != 1 || x.shape(0) != y.shape(0)) throw py::value_error("x and y must be equal-length 1-d arrays");
  std::vector<ScanPoint> scan(static_cast<std::size_t>(x.shape(0)));
  auto xv = x.unchecked<1>();
  auto yv = y.unchecked<1>();
  for (py::ssize_t i = 0; i < x.shape(0); ++i) scan[i] = {xv(i), yv(i), 0.0};
  if (!sigma.is_none()) {
    auto s = sigma.cast<DoubleArray>();
    if (s.ndim() != 1 || s.shape(0) != x.shape(0)) throw py::value_error("sigma must match x");
    auto sv = s.unchecked<1>();
    for (py::ssize_t i = 0; i < s.shape(0); ++i) scan[i].sigma = sv(i);
  }
  return scan;
}

CountsTable table_from(const std::vector<std::uint64_t>& counts, std::int64_t cycles, double efficiency, bool slot_weighted) {
  if (counts.size() != kSettingCount) throw py::value_error("expected 16 counts");
  CountsTable t;
  std::copy(counts.begin(), counts.end(), t.counts.begin());
  t.acquisition_cycles = cycles;
  t.efficiency_product = efficiency;
  t.slot_weighted = slot_weighted;
  t.validate();
  return t;
}

py::dict table_to_dict(const CountsTable& t) {
  py::dict d;
  d["counts"] = std::vector<std::uint64_t>(t.counts.begin(), t.counts.end());
  d["acquisition_cycles"] = t.acquisition_cycles;
  d["efficiency_product"] = t.efficiency_product;
  d["slot_weighted"] = t.slot_weighted;
  return d;
}

CavityDesign design_from(double t_gaas, double t_alas, double t_cavity, int top, int bottom) {
  CavityDesign d;
  d.t_gaas_nm = t_gaas;
  d.t_alas_nm = t_alas;
  d.t_cavity_nm = t_cavity;
  d.top_pairs = top;
  d.bottom_pairs = bottom;
  return d;
}

}  // namespace

PYBIND11_MODULE(_qdtb, m) {
  m.doc() = "Quantum-dot time-bin entanglement simulation and analysis";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  m.def("ideal_timebin_density", [](double visibility, double pump_phase_rad) {
    TimebinStateModel model;
    model.visibility = visibility;
    model.pump_phase_rad = pump_phase_rad;
    return array_from(ideal_timebin_density(model).matrix());
  }, py::arg("visibility") = 0.70, py::arg("pump_phase_rad") = 0.0);
  m.def("concurrence", [](const ComplexArray& rho) { return concurrence(density_from(rho)); }, py::arg("rho"));
  m.def("purity", [](const ComplexArray& rho) { return purity(density_from(rho)); }, py::arg("rho"));
  m.def("fidelity_phi_plus", [](const ComplexArray& rho, double phase) {
    return fidelity_to_state(density_from(rho), TwoQubitState::phi_plus(phase));
  }, py::arg("rho"), py::arg("phase") = 0.0);
  m.def("project_to_physical", [](const ComplexArray& m) { return array_from(project_to_physical(matrix_from(m)).matrix()); },
        py::arg("matrix"));

  m.def("setting_labels", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : tomography_settings()) out.emplace_back(label(s.xx), label(s.x));
    return out;
  });
  m.def("simulate_counts", [](const ComplexArray& rho, std::int64_t cycles, double efficiency, std::uint64_t seed) {
    return table_to_dict(simulate_counts(density_from(rho), cycles, efficiency, seed));
  }, py::arg("rho"), py::arg("cycles_per_setting"), py::arg("efficiency_product"), py::arg("seed"));
  m.def("expected_counts", [](const ComplexArray& rho, std::int64_t cycles, double efficiency) {
    return table_to_dict(expected_counts(density_from(rho), cycles, efficiency));
  }, py::arg("rho"), py::arg("cycles_per_setting"), py::arg("efficiency_product"));
  m.def("linear_reconstruct", [](const std::array<double, kSettingCount>& p) { return array_from(linear_reconstruct(p)); },
        py::arg("probabilities"));
  m.def("reconstruct", [](const std::vector<std::uint64_t>& counts, std::int64_t cycles, double efficiency,
                          bool slot_weighted, int mc_runs, std::uint64_t seed, int threads) {
    const auto table = table_from(counts, cycles, efficiency, slot_weighted);
    ReconstructionResult r;
    {
      py::gil_scoped_release release;
      r = reconstruct(table, mc_runs, seed, threads);
    }
    py::dict d = to_python(to_json(r));
    d["rho_matrix"] = array_from(r.rho.matrix());
    return d;
  }, py::arg("counts"), py::arg("acquisition_cycles"), py::arg("efficiency_product") = 1.0,
     py::arg("slot_weighted") = false, py::arg("mc_runs") = 50, py::arg("seed") = 1, py::arg("threads") = 1);

  m.def("g2_zero", [](const CountArray& counts, double bin_width_ps, double origin_ps, double rep_period_ps) {
    return to_python(to_json(g2_zero(histogram_from(counts, bin_width_ps, origin_ps), rep_period_ps)));
  }, py::arg("counts"), py::arg("bin_width_ps"), py::arg("origin_ps"), py::arg("rep_period_ps"));
  m.def("blinking_factor", [](const CountArray& counts, double bin_width_ps, double origin_ps, double rep_period_ps) {
    return to_python(to_json(blinking_factor(histogram_from(counts, bin_width_ps, origin_ps), rep_period_ps)));
  }, py::arg("counts"), py::arg("bin_width_ps"), py::arg("origin_ps"), py::arg("rep_period_ps"));
  m.def("hom_five_peak", [](const CountArray& counts, double bin_width_ps, double origin_ps, double delay_ps,
                            double rep_period_ps) {
    return to_python(to_json(hom_five_peak(histogram_from(counts, bin_width_ps, origin_ps), delay_ps, 0.0, rep_period_ps)));
  }, py::arg("counts"), py::arg("bin_width_ps"), py::arg("origin_ps"), py::arg("delay_ps"), py::arg("rep_period_ps") = 0.0);
  m.def("hom_delay_scan", [](const DoubleArray& x, const DoubleArray& y, const py::object& sigma) {
    return to_python(to_json(hom_delay_scan(scan_from(x, y, sigma))));
  }, py::arg("delay_ps"), py::arg("counts"), py::arg("sigma") = py::none());
  m.def("fit_rabi", [](const DoubleArray& x, const DoubleArray& y, double rate_norm, const py::object& sigma) {
    return to_python(to_json(fit_rabi(scan_from(x, y, sigma), rate_norm)));
  }, py::arg("x"), py::arg("counts"), py::arg("rate_norm"), py::arg("sigma") = py::none());
  m.def("fit_lifetime", [](const CountArray& counts, double bin_width_ps, double origin_ps, double jitter_sigma_ps) {
    return to_python(to_json(fit_lifetime(histogram_from(counts, bin_width_ps, origin_ps), jitter_sigma_ps)));
  }, py::arg("counts"), py::arg("bin_width_ps"), py::arg("origin_ps"), py::arg("jitter_sigma_ps"));

  m.def("cavity_spectrum", [](const DoubleArray& wavelengths_nm, double t_gaas, double t_alas, double t_cavity, int top,
                              int bottom) {
    if (wavelengths_nm.ndim() != 1) throw py::value_error("expected a 1-d wavelength array");
    const auto stack = cavity_stack(design_from(t_gaas, t_alas, t_cavity, top, bottom));
    std::vector<double> wl(wavelengths_nm.data(), wavelengths_nm.data() + wavelengths_nm.shape(0));
    const auto spec = transfer_matrix_spectrum(stack, wl);
    DoubleArray out({static_cast<py::ssize_t>(spec.size()), py::ssize_t{3}});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < spec.size(); ++i) {
      v(i, 0) = spec[i].wavelength_nm;
      v(i, 1) = spec[i].reflectance;
      v(i, 2) = spec[i].transmittance;
    }
    return out;
  }, py::arg("wavelengths_nm"), py::arg("t_gaas_nm") = 68.0, py::arg("t_alas_nm") = 82.0, py::arg("t_cavity_nm") = 270.0,
     py::arg("top_pairs") = 5, py::arg("bottom_pairs") = 24);
  m.def("cavity_resonance", [](double t_gaas, double t_alas, double t_cavity, int top, int bottom) {
    return to_python(to_json(cavity_resonance_and_q(cavity_stack(design_from(t_gaas, t_alas, t_cavity, top, bottom)))));
  }, py::arg("t_gaas_nm") = 68.0, py::arg("t_alas_nm") = 82.0, py::arg("t_cavity_nm") = 270.0, py::arg("top_pairs") = 5,
     py::arg("bottom_pairs") = 24);
  m.def("extraction_efficiency", [](double na, double defect_height_nm, double defect_diameter_nm) {
    DefectModel defect;
    defect.height_nm = defect_height_nm;
    defect.diameter_nm = defect_diameter_nm;
    return to_python(to_json(extraction_efficiency(cavity_stack(), defect, na)));
  }, py::arg("na"), py::arg("defect_height_nm") = 20.0, py::arg("defect_diameter_nm") = 2000.0);
  m.def("efficiency_budget", [](double count_rate_hz, double rep_rate_hz, double blinking, double p_emit,
                                double eta_detector, double eta_fiber, double eta_setup) {
    EfficiencyBudget b{count_rate_hz, rep_rate_hz, blinking, p_emit, eta_detector, eta_fiber, eta_setup};
    return to_python(to_json(efficiency_budget(b)));
  }, py::arg("count_rate_hz"), py::arg("rep_rate_hz") = 80e6, py::arg("blinking") = 0.625, py::arg("p_emit") = 0.65,
     py::arg("eta_detector") = 0.25, py::arg("eta_fiber") = 0.4, py::arg("eta_setup") = 0.12);
}
