#include "boxpref/asymmetric_loss.hpp"

#include <cmath>
#include <sstream>

#include "boxpref/error.hpp"

namespace boxpref {

namespace {

void check_finite(double x) {
  if (!std::isfinite(x)) {
    std::ostringstream msg;
    msg << "loss input must be finite, got " << x;
    fail(ErrorCode::kNonFiniteInput, msg.str());
  }
}

}  // namespace

AsymmetricLossParams::AsymmetricLossParams(double alpha, double beta)
    : alpha_(alpha), beta_(beta), sqrt_alpha_(std::sqrt(alpha)) {
  if (!(std::isfinite(alpha) && alpha > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "alpha must be positive and finite");
  }
  if (!(std::isfinite(beta) && beta > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "beta must be positive and finite");
  }
}

double loss_value(double x, const AsymmetricLossParams& p) {
  check_finite(x);
  const double sa = p.sqrt_alpha();
  const double b = p.beta();
  if (x >= b) return x / sa - b / (2.0 * sa);
  if (x <= -b) return -sa * x - sa * b / 2.0;
  if (x >= 0.0) return x * x / (2.0 * sa * b);
  return sa * x * x / (2.0 * b);
}

double loss_gradient(double x, const AsymmetricLossParams& p) {
  check_finite(x);
  const double sa = p.sqrt_alpha();
  const double b = p.beta();
  if (x >= b) return 1.0 / sa;
  if (x <= -b) return -sa;
  if (x >= 0.0) return x / (sa * b);
  return sa * x / b;
}

LossSample loss_sample(double x, const AsymmetricLossParams& p) {
  return {x, loss_value(x, p), loss_gradient(x, p)};
}

double smooth_l1(double x, double beta) {
  check_finite(x);
  const double ax = std::abs(x);
  if (ax < beta) return 0.5 * x * x / beta;
  return ax - 0.5 * beta;
}

BoxLoss box_regression_loss(const Box& pred, const Box& gt,
                            const AsymmetricLossParams& p) {
  const auto center = AsymmetricLossParams::symmetric(p.beta());
  const double dw = pred.width() - gt.width();
  const double dh = pred.height() - gt.height();
  const double dcx = pred.center_x() - gt.center_x();
  const double dcy = pred.center_y() - gt.center_y();

  BoxLoss out;
  out.value = loss_value(dw, p) + loss_value(dh, p) + loss_value(dcx, center) +
              loss_value(dcy, center);

  const double g_cx = loss_gradient(dcx, center);
  const double g_cy = loss_gradient(dcy, center);
  out.gradient.x_min = g_cx;
  out.gradient.y_min = g_cy;
  out.gradient.width = loss_gradient(dw, p) + 0.5 * g_cx;
  out.gradient.height = loss_gradient(dh, p) + 0.5 * g_cy;
  return out;
}

}  // namespace boxpref
