#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace omtube {

/// Largest manifold dimension supported by the simulation kernels.
inline constexpr int kMaxDim = 6;
/// Largest driving-noise dimension of the coupled system, 1 + d(d-1)/2 at d = kMaxDim.
inline constexpr int kMaxNoise = 1 + kMaxDim * (kMaxDim - 1) / 2;

// Fixed-capacity dynamic-size types: no heap traffic in per-step code.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
using NoiseVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxNoise, 1>;

inline Vec zeros(int d) { return Vec::Zero(d); }
inline Mat identity(int d) { return Mat::Identity(d, d); }

}  // namespace omtube
