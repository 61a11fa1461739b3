#include "invdist/models.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "invdist/errors.hpp"

namespace invdist {

namespace {

std::string describe(const Vector& x, int regime) {
  std::ostringstream os;
  os << "x = (";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << "), regime " << regime;
  return os.str();
}

}  // namespace

void validate_generator(const Matrix& Q) {
  if (Q.rows() == 0 || Q.rows() != Q.cols()) throw ModelError("generator must be a non-empty square matrix");
  for (Eigen::Index z = 0; z < Q.rows(); ++z) {
    for (Eigen::Index w = 0; w < Q.cols(); ++w) {
      if (!std::isfinite(Q(z, w))) throw ModelError("generator has non-finite entries");
      if (z != w && Q(z, w) < 0.0) throw ModelError("generator has a negative off-diagonal rate");
    }
    const double scale = std::max(1.0, Q.row(z).cwiseAbs().maxCoeff());
    if (std::abs(Q.row(z).sum()) > 1e-12 * scale) {
      throw ModelError("generator row " + std::to_string(z) + " does not sum to zero");
    }
  }
}

void DiffusionModel::validate() const {
  if (dim < 1 || noise_dim < 1) throw ModelError("dimensions must be positive");
  if (!drift || !diffusion) throw ModelError("drift and diffusion are required");
}

void SwitchingModel::validate() const {
  if (dim < 1 || noise_dim < 1) throw ModelError("dimensions must be positive");
  if (!drift || !diffusion) throw ModelError("drift and diffusion are required");
  validate_generator(generator);
}

int state_dim(const Model& m) {
  return std::visit([](const auto& mm) { return mm.dim; }, m);
}

int noise_dim(const Model& m) {
  return std::visit([](const auto& mm) { return mm.noise_dim; }, m);
}

int regime_count(const Model& m) {
  if (const auto* sw = std::get_if<SwitchingModel>(&m)) return sw->regimes();
  return 1;
}

Vector drift_at(const Model& m, const State& s) {
  if (const auto* sw = std::get_if<SwitchingModel>(&m)) return sw->drift(s.x, s.regime);
  return std::get<DiffusionModel>(m).drift(s.x);
}

Matrix diffusion_at(const Model& m, const State& s) {
  if (const auto* sw = std::get_if<SwitchingModel>(&m)) return sw->diffusion(s.x, s.regime);
  return std::get<DiffusionModel>(m).diffusion(s.x);
}

DiffusionModel ou_model(double a, double sigma, int d) {
  DiffusionModel m;
  m.dim = d;
  m.noise_dim = d;
  m.drift = [a](const Vector& x) -> Vector { return -a * x; };
  m.diffusion = [sigma, d](const Vector&) -> Matrix { return sigma * Matrix::Identity(d, d); };
  m.diffusion_derivative = [](double) { return 0.0; };
  m.name = "ou";
  return m;
}

DiffusionModel milstein1d_model(double a, double sigma0, double c) {
  if (c < 0.0) throw ModelError("milstein1d: c must be >= 0");
  if (sigma0 == 0.0 && c == 0.0) throw ModelError("milstein1d: degenerate diffusion");
  DiffusionModel m;
  m.dim = 1;
  m.noise_dim = 1;
  m.drift = [a](const Vector& x) -> Vector { return -a * x; };
  m.diffusion = [sigma0, c](const Vector& x) -> Matrix {
    Matrix s(1, 1);
    s(0, 0) = std::sqrt(sigma0 * sigma0 + c * x[0] * x[0]);
    return s;
  };
  m.diffusion_derivative = [sigma0, c](double x) {
    return c * x / std::sqrt(sigma0 * sigma0 + c * x * x);
  };
  m.name = "milstein1d";
  return m;
}

SwitchingModel switching_ou_model(std::vector<double> a, std::vector<double> sigma, Matrix Q, int d) {
  if (a.size() != sigma.size() || static_cast<Eigen::Index>(a.size()) != Q.rows()) {
    throw ModelError("switching-ou: a, sigma and Q must agree on the number of regimes");
  }
  SwitchingModel m;
  m.dim = d;
  m.noise_dim = d;
  m.drift = [a](const Vector& x, int z) -> Vector { return -a[static_cast<std::size_t>(z)] * x; };
  m.diffusion = [sigma, d](const Vector&, int z) -> Matrix {
    return sigma[static_cast<std::size_t>(z)] * Matrix::Identity(d, d);
  };
  m.generator = std::move(Q);
  m.name = "switching-ou";
  m.validate();
  return m;
}

double finite_difference_step(const Vector& x) { return 1e-5 * (1.0 + x.norm()); }

Vector gradient_of(const SmoothFunction& f, const Vector& x, int regime) {
  if (f.gradient) return f.gradient(x, regime);
  const double h = finite_difference_step(x);
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = f.value(xp, regime);
    xp[i] = x[i] - h;
    const double fm = f.value(xp, regime);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Matrix hessian_of(const SmoothFunction& f, const Vector& x, int regime) {
  if (f.hessian) return f.hessian(x, regime);
  const double h = finite_difference_step(x);
  const Eigen::Index d = x.size();
  Matrix H(d, d);
  const double f0 = f.value(x, regime);
  Vector y = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    y[i] = x[i] + h;
    const double fp = f.value(y, regime);
    y[i] = x[i] - h;
    const double fm = f.value(y, regime);
    y[i] = x[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    for (Eigen::Index j = i + 1; j < d; ++j) {
      auto at = [&](double si, double sj) {
        y[i] = x[i] + si * h;
        y[j] = x[j] + sj * h;
        const double v = f.value(y, regime);
        y[i] = x[i];
        y[j] = x[j];
        return v;
      };
      H(i, j) = H(j, i) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
    }
  }
  return H;
}

double apply_generator(const Model& model, const SmoothFunction& f, const State& s) {
  const Vector b = drift_at(model, s);
  const Matrix sig = diffusion_at(model, s);
  const Vector g = gradient_of(f, s.x, s.regime);
  const Matrix H = hessian_of(f, s.x, s.regime);
  if (!g.allFinite() || !H.allFinite()) {
    throw EvaluationError("non-finite derivative of f at " + describe(s.x, s.regime));
  }
  double out = b.dot(g) + 0.5 * ((sig * sig.transpose()).cwiseProduct(H)).sum();
  if (const auto* sw = std::get_if<SwitchingModel>(&model)) {
    for (int w = 0; w < sw->regimes(); ++w) {
      const double q = sw->generator(s.regime, w);
      if (q == 0.0) continue;
      const double fw = f.value(s.x, w);
      if (!std::isfinite(fw)) {
        throw EvaluationError("non-finite value of f at " + describe(s.x, w));
      }
      out += q * fw;
    }
  }
  if (!std::isfinite(out)) throw EvaluationError("non-finite Af at " + describe(s.x, s.regime));
  return out;
}

void Innovations::draw_into(RandomStream& rng, Vector& out) const {
  out.resize(dim_);
  if (kind_ == InnovationKind::Gaussian) {
    for (int i = 0; i < dim_; ++i) out[i] = rng.normal();
    return;
  }
  static const double kRoot3 = std::sqrt(3.0);
  for (int i = 0; i < dim_; ++i) {
    const double u = rng.uniform();
    out[i] = u < 1.0 / 6.0 ? -kRoot3 : (u < 5.0 / 6.0 ? 0.0 : kRoot3);
  }
}

Vector Innovations::draw(RandomStream& rng) const {
  Vector u;
  draw_into(rng, u);
  return u;
}

double Innovations::support_bound() const noexcept {
  if (kind_ == InnovationKind::Gaussian) return std::numeric_limits<double>::infinity();
  return std::sqrt(3.0 * dim_);
}

}  // namespace invdist
