#pragma once

#include "boxpref/geometry.hpp"

namespace boxpref {

// Parameters of the asymmetric smooth-L1 loss. `alpha` scales how much more an
// undersized prediction (x < 0) costs than an equally oversized one; `beta`
// is the half-width of the quadratic zone, in the units of x. alpha == 1 is
// the standard smooth-L1 loss.
class AsymmetricLossParams {
 public:
  AsymmetricLossParams(double alpha, double beta);

  static AsymmetricLossParams symmetric(double beta) { return {1.0, beta}; }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double sqrt_alpha() const { return sqrt_alpha_; }

 private:
  double alpha_;
  double beta_;
  double sqrt_alpha_;
};

struct LossSample {
  double x = 0.0;  // prediction minus target
  double value = 0.0;
  double gradient = 0.0;
};

/// Four-branch loss of x = x_pred - x_gt:
///   [0, beta):   x^2 / (2 sqrt(a) beta)
///   (-beta, 0):  sqrt(a) x^2 / (2 beta)
///   [beta, inf): x / sqrt(a) - beta / (2 sqrt(a))
///   (-inf,-beta]: -sqrt(a) x - sqrt(a) beta / 2
/// Throws NonFiniteInput for NaN or infinite x.
double loss_value(double x, const AsymmetricLossParams& p);

/// Derivative of loss_value. At x = +-beta the linear-branch slope is returned.
double loss_gradient(double x, const AsymmetricLossParams& p);

LossSample loss_sample(double x, const AsymmetricLossParams& p);

/// Standard smooth-L1 with transition point beta.
double smooth_l1(double x, double beta);

struct BoxGradient {
  double x_min = 0.0;
  double y_min = 0.0;
  double width = 0.0;
  double height = 0.0;
};

struct BoxLoss {
  double value = 0.0;
  BoxGradient gradient;  // with respect to the predicted box fields
};

/// Asymmetric loss on the width and height deltas plus symmetric smooth-L1 on
/// the center deltas, all sharing beta. Gradients follow through
/// center = min + extent / 2.
BoxLoss box_regression_loss(const Box& pred, const Box& gt,
                            const AsymmetricLossParams& p);

}  // namespace boxpref
