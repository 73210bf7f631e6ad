#pragma once

#include "aftgof/data.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <initializer_list>
#include <vector>

namespace fixtures {

/// One-covariate dataset from log times.
inline aftgof::SurvivalDataset from_log(std::initializer_list<double> log_x,
                                        std::initializer_list<int> status,
                                        std::initializer_list<double> z) {
  std::vector<double> t;
  for (double v : log_x) t.push_back(std::exp(v));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(z.size()), 1);
  Eigen::Index i = 0;
  for (double v : z) m(i++, 0) = v;
  return {t, std::vector<int>(status), m, {"z"}};
}

}  // namespace fixtures
