#include "qdtb/qcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "qdtb/error.hpp"

namespace qdtb {

ComplexMatrix::ComplexMatrix(std::initializer_list<std::initializer_list<Complex>> rows) : dim_(rows.size()) {
  data_.reserve(dim_ * dim_);
  for (const auto& row : rows) {
    if (row.size() != dim_) throw std::invalid_argument("ComplexMatrix: rows must form a square matrix");
    data_.insert(data_.end(), row.begin(), row.end());
  }
  if (!all_finite()) throw std::invalid_argument("ComplexMatrix: non-finite entry");
}

ComplexMatrix ComplexMatrix::identity(std::size_t dim) {
  ComplexMatrix m(dim);
  for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

ComplexMatrix ComplexMatrix::diagonal(std::span<const double> values) {
  ComplexMatrix m(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

ComplexMatrix ComplexMatrix::adjoint() const {
  ComplexMatrix out(dim_);
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < dim_; ++j) out(j, i) = std::conj((*this)(i, j));
  return out;
}

ComplexMatrix ComplexMatrix::conjugate() const {
  ComplexMatrix out = *this;
  for (auto& z : out.data_) z = std::conj(z);
  return out;
}

Complex ComplexMatrix::trace() const {
  Complex t = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) t += (*this)(i, i);
  return t;
}

double ComplexMatrix::hermiticity_defect() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = i; j < dim_; ++j)
      worst = std::max(worst, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
  return worst;
}

bool ComplexMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](const Complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
}

ComplexMatrix& ComplexMatrix::operator+=(const ComplexMatrix& o) {
  if (o.dim_ != dim_) throw std::invalid_argument("ComplexMatrix: dimension mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

ComplexMatrix& ComplexMatrix::operator-=(const ComplexMatrix& o) {
  if (o.dim_ != dim_) throw std::invalid_argument("ComplexMatrix: dimension mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
  return *this;
}

ComplexMatrix& ComplexMatrix::operator*=(Complex s) {
  for (auto& z : data_) z *= s;
  return *this;
}

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.dim_ != b.dim_) throw std::invalid_argument("ComplexMatrix: dimension mismatch");
  const std::size_t n = a.dim_;
  ComplexMatrix out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const Complex aik = a(i, k);
      for (std::size_t j = 0; j < n; ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("max_abs_diff: dimension mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) worst = std::max(worst, std::abs(a.data()[k] - b.data()[k]));
  return worst;
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  const std::size_t na = a.dim(), nb = b.dim();
  ComplexMatrix out(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j)
      for (std::size_t k = 0; k < nb; ++k)
        for (std::size_t l = 0; l < nb; ++l) out(i * nb + k, j * nb + l) = a(i, j) * b(k, l);
  return out;
}

ComplexMatrix outer(std::span<const Complex> ket, std::span<const Complex> bra) {
  if (ket.size() != bra.size()) throw std::invalid_argument("outer: size mismatch");
  ComplexMatrix out(ket.size());
  for (std::size_t i = 0; i < ket.size(); ++i)
    for (std::size_t j = 0; j < bra.size(); ++j) out(i, j) = ket[i] * std::conj(bra[j]);
  return out;
}

Complex trace_of_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  const std::size_t n = a.dim();
  Complex t = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) t += a(i, k) * b(k, i);
  return t;
}

Eigensystem hermitian_eigensystem(const ComplexMatrix& m) {
  const double defect = m.hermiticity_defect();
  if (!(defect <= 1e-10)) {
    std::ostringstream msg;
    msg << "hermitian_eigensystem: input is not Hermitian, max |m - m^dagger| = " << defect;
    throw std::invalid_argument(msg.str());
  }
  const std::size_t n = m.dim();
  ComplexMatrix a = m;
  ComplexMatrix v = ComplexMatrix::identity(n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = a(i, i).real();

  double frob2 = 0.0;
  for (const auto& z : a.data()) frob2 += std::norm(z);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::norm(a(p, q));
    if (off <= 1e-32 * frob2 || off == 0.0) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const Complex apq = a(p, q);
        const double mag = std::abs(apq);
        if (mag == 0.0) continue;
        // D = diag(1, conj(phase)) makes the (p,q) entry real; then a real
        // Jacobi rotation [[c, s], [-s, c]] annihilates it. U = D * G.
        const Complex phase = apq / mag;
        const double theta = (a(q, q).real() - a(p, p).real()) / (2.0 * mag);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const Complex cph = std::conj(phase);
        const Complex u_qp = -s * cph;
        const Complex u_qq = c * cph;

        for (std::size_t k = 0; k < n; ++k) {  // A <- A U
          const Complex akp = a(k, p), akq = a(k, q);
          a(k, p) = akp * c + akq * u_qp;
          a(k, q) = akp * s + akq * u_qq;
        }
        for (std::size_t k = 0; k < n; ++k) {  // A <- U^dagger A
          const Complex apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk + std::conj(u_qp) * aqk;
          a(q, k) = s * apk + std::conj(u_qq) * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {  // V <- V U
          const Complex vkp = v(k, p), vkq = v(k, q);
          v(k, p) = vkp * c + vkq * u_qp;
          v(k, q) = vkp * s + vkq * u_qq;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i).real() > a(j, j).real(); });
  Eigensystem es;
  es.values.resize(n);
  es.vectors = ComplexMatrix(n);
  for (std::size_t k = 0; k < n; ++k) {
    es.values[k] = a(order[k], order[k]).real();
    for (std::size_t i = 0; i < n; ++i) es.vectors(i, k) = v(i, order[k]);
  }
  return es;
}

TwoQubitState::TwoQubitState(const std::array<Complex, 4>& amplitudes) : amplitudes_(amplitudes) {
  double norm2 = 0.0;
  for (const auto& a : amplitudes_) norm2 += std::norm(a);
  if (std::abs(norm2 - 1.0) > 1e-12) throw std::invalid_argument("TwoQubitState: amplitudes are not normalized");
}

TwoQubitState TwoQubitState::phi_plus(double phase) {
  const double h = 1.0 / std::sqrt(2.0);
  return TwoQubitState({h, 0.0, 0.0, h * std::polar(1.0, phase)});
}

ComplexMatrix TwoQubitState::projector() const { return outer(amplitudes_, amplitudes_); }

DensityMatrix::DensityMatrix(ComplexMatrix m) : m_(std::move(m)) {
  if (m_.dim() != 4) throw std::invalid_argument("DensityMatrix: dimension must be 4");
  if (!m_.all_finite()) throw std::invalid_argument("DensityMatrix: non-finite entry");
  if (m_.hermiticity_defect() > kHermitianTolerance) throw std::invalid_argument("DensityMatrix: not Hermitian");
  const Complex tr = m_.trace();
  if (std::abs(tr.real() - 1.0) > kTraceTolerance || std::abs(tr.imag()) > kTraceTolerance)
    throw std::invalid_argument("DensityMatrix: trace is not 1");
  const auto es = hermitian_eigensystem(m_);
  if (es.values.back() < kPositivityTolerance) throw std::invalid_argument("DensityMatrix: negative eigenvalue");
}

DensityMatrix DensityMatrix::normalized(const ComplexMatrix& m) {
  ComplexMatrix h = (m + m.adjoint()) * Complex(0.5);
  const double tr = h.trace().real();
  if (!(std::abs(tr) > 0.0)) throw std::invalid_argument("DensityMatrix::normalized: zero trace");
  h *= Complex(1.0 / tr);
  for (std::size_t i = 0; i < h.dim(); ++i) h(i, i) = h(i, i).real();
  return DensityMatrix(std::move(h));
}

DensityMatrix DensityMatrix::from_state(const TwoQubitState& psi) { return normalized(psi.projector()); }

DensityMatrix DensityMatrix::maximally_mixed() { return DensityMatrix(ComplexMatrix::identity(4) * Complex(0.25)); }

DensityMatrix DensityMatrix::werner(double p) {
  ComplexMatrix m = TwoQubitState::phi_plus().projector() * Complex(p) + ComplexMatrix::identity(4) * Complex((1.0 - p) / 4.0);
  return normalized(m);
}

DensityMatrix project_to_physical(const ComplexMatrix& m) {
  ComplexMatrix h = (m + m.adjoint()) * Complex(0.5);
  return DensityMatrix::normalized(hermitian_function(h, [](double x) { return std::max(x, 0.0); }));
}

double concurrence(const DensityMatrix& rho) {
  // sigma_y (x) sigma_y in the computational basis is the anti-diagonal (-1, 1, 1, -1).
  ComplexMatrix yy(4);
  yy(0, 3) = -1.0;
  yy(1, 2) = 1.0;
  yy(2, 1) = 1.0;
  yy(3, 0) = -1.0;
  const ComplexMatrix tilde = yy * rho.matrix().conjugate() * yy;
  // Eigenvalues of rho * tilde equal those of sqrt(rho) tilde sqrt(rho), which is Hermitian.
  const ComplexMatrix root = hermitian_function(rho.matrix(), [](double x) { return std::sqrt(std::max(x, 0.0)); });
  ComplexMatrix r = root * tilde * root;
  r = (r + r.adjoint()) * Complex(0.5);
  auto values = hermitian_eigensystem(r).values;
  for (auto& x : values) x = std::sqrt(std::max(x, 0.0));
  std::sort(values.begin(), values.end(), std::greater<>());
  return std::max(0.0, values[0] - values[1] - values[2] - values[3]);
}

double fidelity_to_state(const DensityMatrix& rho, const TwoQubitState& target) {
  const auto& a = target.amplitudes();
  Complex f = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) f += std::conj(a[i]) * rho(i, j) * a[j];
  if (std::abs(f.imag()) >= 1e-10) throw std::logic_error("fidelity_to_state: overlap has an imaginary part");
  return std::clamp(f.real(), 0.0, 1.0);
}

double purity(const DensityMatrix& rho) { return trace_of_product(rho.matrix(), rho.matrix()).real(); }

double max_bell_phase_fidelity(const DensityMatrix& rho) {
  return std::clamp(0.5 * (rho(kEE, kEE).real() + rho(kLL, kLL).real()) + std::abs(rho(kEE, kLL)), 0.0, 1.0);
}

nlohmann::json to_json(const ComplexMatrix& m) {
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  for (std::size_t i = 0; i < m.dim(); ++i) {
    nlohmann::json rr = nlohmann::json::array(), ii = nlohmann::json::array();
    for (std::size_t j = 0; j < m.dim(); ++j) {
      rr.push_back(m(i, j).real());
      ii.push_back(m(i, j).imag());
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ii));
  }
  return {{"re", std::move(re)}, {"im", std::move(im)}};
}

ComplexMatrix complex_matrix_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("re") || !j.contains("im"))
    throw DataError("matrix JSON must be an object with \"re\" and \"im\" arrays");
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  if (!re.is_array() || !im.is_array() || re.size() != im.size() || re.empty())
    throw DataError("matrix JSON: \"re\" and \"im\" must be equally sized non-empty arrays");
  const std::size_t n = re.size();
  ComplexMatrix m(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (!re[r].is_array() || !im[r].is_array() || re[r].size() != n || im[r].size() != n)
      throw DataError("matrix JSON: row " + std::to_string(r) + " has the wrong length");
    for (std::size_t c = 0; c < n; ++c) {
      if (!re[r][c].is_number() || !im[r][c].is_number())
        throw DataError("matrix JSON: entry (" + std::to_string(r) + "," + std::to_string(c) + ") is not a number");
      m(r, c) = Complex(re[r][c].get<double>(), im[r][c].get<double>());
    }
  }
  if (!m.all_finite()) throw DataError("matrix JSON: non-finite entry");
  return m;
}

nlohmann::json to_json(const DensityMatrix& rho) { return to_json(rho.matrix()); }

DensityMatrix density_matrix_from_json(const nlohmann::json& j) {
  ComplexMatrix m = complex_matrix_from_json(j);
  try {
    return DensityMatrix(std::move(m));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("density matrix JSON: ") + e.what());
  }
}

}  // namespace qdtb
