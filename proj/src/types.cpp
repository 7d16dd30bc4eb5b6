#include "cbfd/types.hpp"

namespace cbfd {

Box::Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) { validate(); }

Box Box::symmetric(int dim, double half_width) {
  return Box(Vec::Constant(dim, -half_width), Vec::Constant(dim, half_width));
}

bool Box::contains(const Vec& v, double tol) const {
  if (v.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < lo[i] - tol || v[i] > hi[i] + tol) return false;
  }
  return true;
}

bool Box::contains(const Box& inner) const {
  return inner.dim() == dim() && (inner.lo.array() >= lo.array()).all() &&
         (inner.hi.array() <= hi.array()).all();
}

Vec Box::clamp(const Vec& v) const { return v.cwiseMax(lo).cwiseMin(hi); }

void Box::validate() const {
  if (lo.size() != hi.size()) throw InvalidArgument("box: lo/hi dimension mismatch");
  if (!all_finite(lo) || !all_finite(hi)) throw InvalidArgument("box: non-finite bound");
  if ((lo.array() > hi.array()).any()) throw InvalidArgument("box: lo > hi");
}

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace cbfd
