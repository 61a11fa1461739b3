#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "invdist/random.hpp"
#include "invdist/types.hpp"

namespace invdist {

/// dX = b(X) dt + sigma(X) dW with W an N-dimensional Brownian motion.
struct DiffusionModel {
  int dim = 1;
  int noise_dim = 1;
  std::function<Vector(const Vector&)> drift;
  std::function<Matrix(const Vector&)> diffusion;  ///< d x N
  /// sigma' for the one-dimensional Milstein scheme; empty when unavailable.
  std::function<double(double)> diffusion_derivative;
  std::string name;

  bool supports_milstein() const noexcept {
    return dim == 1 && noise_dim == 1 && static_cast<bool>(diffusion_derivative);
  }
  void validate() const;
};

/// Diffusion whose coefficients depend on a finite-state continuous-time
/// Markov chain with generator Q (regimes 0..M0-1), independent of W.
struct SwitchingModel {
  int dim = 1;
  int noise_dim = 1;
  std::function<Vector(const Vector&, int)> drift;
  std::function<Matrix(const Vector&, int)> diffusion;
  Matrix generator;
  std::string name;

  int regimes() const noexcept { return static_cast<int>(generator.rows()); }
  void validate() const;
};

using Model = std::variant<DiffusionModel, SwitchingModel>;

/// Throws ModelError unless q_zw >= 0 off the diagonal and rows sum to 0
/// (tolerance 1e-12).
void validate_generator(const Matrix& Q);

int state_dim(const Model& m);
int noise_dim(const Model& m);
int regime_count(const Model& m);
Vector drift_at(const Model& m, const State& s);
Matrix diffusion_at(const Model& m, const State& s);

/// dX = -a X dt + sigma dW in R^d with independent coordinates.
DiffusionModel ou_model(double a, double sigma, int d = 1);
/// dX = -a X dt + sqrt(sigma0^2 + c X^2) dW, one-dimensional.
DiffusionModel milstein1d_model(double a, double sigma0, double c);
/// dX = -a(z) X dt + sigma(z) dW in R^d with regime generator Q.
SwitchingModel switching_ou_model(std::vector<double> a, std::vector<double> sigma, Matrix Q,
                                  int d = 1);

/// Scalar function on the state space with optional exact derivatives.
/// Missing derivatives fall back to central finite differences with step
/// h = 1e-5 (1 + |x|).
struct SmoothFunction {
  std::function<double(const Vector&, int)> value;
  std::function<Vector(const Vector&, int)> gradient;
  std::function<Matrix(const Vector&, int)> hessian;
};

double finite_difference_step(const Vector& x);
Vector gradient_of(const SmoothFunction& f, const Vector& x, int regime);
Matrix hessian_of(const SmoothFunction& f, const Vector& x, int regime);

/// Af(x, z) = <b, grad f> + 1/2 sum_ij (sigma sigma^T)_ij d_ij f
///            + sum_w q_zw f(x, w)   (switching models only).
/// Throws EvaluationError on non-finite values.
double apply_generator(const Model& model, const SmoothFunction& f, const State& s);

enum class InnovationKind { Gaussian, ThreePoint };

/// i.i.d. innovations U_n: standard Gaussian, or the product of symmetric
/// three-point laws on {-sqrt3, 0, sqrt3} with probabilities {1/6, 2/3, 1/6}
/// (mean 0, identity covariance, bounded support).
class Innovations {
 public:
  Innovations(InnovationKind kind, int dim) : kind_(kind), dim_(dim) {}

  InnovationKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  void draw_into(RandomStream& rng, Vector& out) const;
  Vector draw(RandomStream& rng) const;
  /// sup |U|; infinity for the Gaussian.
  double support_bound() const noexcept;

 private:
  InnovationKind kind_;
  int dim_;
};

}  // namespace invdist
