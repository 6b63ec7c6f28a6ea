#pragma once

// Dense linear algebra over a standardized reference panel.
//
// Scaling convention: the panel is decomposed as n^{-1/2} X = U D V^T, so the
// LD matrix is R = X^T X / n = V D^2 V^T. Every operation below that touches
// individual space goes through panel_scale(), which is the only place the
// n^{-1/2} factor lives.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cammel/error.hpp"

namespace cammel {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Half-open SNP index range [begin, end).
struct Block {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
  bool operator==(const Block&) const = default;
};

inline double panel_scale(Index n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

/// Column-standardized n x p genotype matrix with LD-block annotation.
struct GenotypePanel {
  Mat values;
  std::vector<Block> blocks;
  std::vector<std::string> snp_ids;

  Index n() const { return values.rows(); }
  Index p() const { return values.cols(); }

  /// Columns [b.begin, b.end) as a panel of their own; ids are carried over.
  GenotypePanel slice(Block b) const {
    if (b.begin < 0 || b.end > p() || b.begin >= b.end) {
      throw Error("linalg", "IndexOutOfRange",
                  "block [" + std::to_string(b.begin) + "," + std::to_string(b.end) +
                      ") outside panel of " + std::to_string(p()) + " SNPs");
    }
    GenotypePanel out;
    out.values = values.middleCols(b.begin, b.size());
    for (const auto& other : blocks) {
      Index lo = std::max(other.begin, b.begin), hi = std::min(other.end, b.end);
      if (lo < hi) out.blocks.push_back({lo - b.begin, hi - b.begin});
    }
    if (out.blocks.empty()) out.blocks = {Block{0, b.size()}};
    if (!snp_ids.empty()) {
      out.snp_ids.assign(snp_ids.begin() + b.begin, snp_ids.begin() + b.end);
    }
    return out;
  }

  /// Union of consecutive blocks [first, last].
  Block span(std::size_t first, std::size_t last) const {
    return Block{blocks.at(first).begin, blocks.at(last).end};
  }
};

inline void check_blocks(const std::vector<Block>& blocks, Index p) {
  Index cursor = 0;
  for (const auto& b : blocks) {
    if (b.begin != cursor || b.end <= b.begin) {
      throw Error("linalg", "InvalidBlocks",
                  "blocks must be sorted, non-empty and contiguous from 0");
    }
    cursor = b.end;
  }
  if (cursor != p) {
    throw Error("linalg", "InvalidBlocks",
                "blocks cover " + std::to_string(cursor) + " of " + std::to_string(p) +
                    " SNPs");
  }
}

inline std::vector<std::string> default_snp_ids(Index p) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) ids.push_back("snp" + std::to_string(j));
  return ids;
}

/// Center each column and divide by its population standard deviation (1/n),
/// so that x_j^T x_j = n for every standardized column.
inline GenotypePanel standardize(const Mat& raw, std::vector<Block> blocks = {},
                                 std::vector<std::string> snp_ids = {}) {
  const Index n = raw.rows(), p = raw.cols();
  if (n < 2) throw Error("linalg", "TooFewSamples", "need at least 2 individuals");
  if (p < 1) throw Error("linalg", "ShapeMismatch", "panel has no SNPs");
  if (blocks.empty()) blocks.push_back({0, p});
  check_blocks(blocks, p);
  if (!snp_ids.empty() && static_cast<Index>(snp_ids.size()) != p) {
    throw Error("linalg", "ShapeMismatch", "snp id count does not match columns");
  }

  GenotypePanel out;
  out.values.resize(n, p);
  for (Index j = 0; j < p; ++j) {
    const double mean = raw.col(j).mean();
    Vec centered = raw.col(j).array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n));
    const double scale = std::max(std::abs(mean), raw.col(j).cwiseAbs().maxCoeff());
    if (!(sd > 1e-12 * std::max(1.0, scale))) {
      throw Error("linalg", "ConstantColumn", "column " + std::to_string(j) + " has zero variance");
    }
    out.values.col(j) = centered / sd;
  }
  out.blocks = std::move(blocks);
  out.snp_ids = snp_ids.empty() ? default_snp_ids(p) : std::move(snp_ids);
  return out;
}

/// Truncated SVD of a panel: n^{-1/2} X = U diag(D) V^T.
struct EigenLD {
  Mat U;  // n x r
  Vec D;  // r, descending, strictly positive
  Mat V;  // p x r
  Index n_ref = 0;

  Index rank() const { return D.size(); }
  Index p() const { return V.rows(); }
  Vec d2() const { return D.array().square(); }
};

inline EigenLD svd_panel(const GenotypePanel& panel, double tol = 1e-8) {
  if (!(tol > 0.0)) throw Error("linalg", "InvalidTolerance", "tol must be positive");
  Mat scaled = panel.values * panel_scale(panel.n());
  Eigen::BDCSVD<Mat> svd(scaled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw Error("linalg", "NumericalFailure", "SVD did not converge", ErrorKind::numerical);
  }
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || !(s(0) > 0.0) || !s.allFinite()) {
    throw Error("linalg", "NumericalFailure", "panel has no positive singular values",
                ErrorKind::numerical);
  }
  Index r = 0;
  while (r < s.size() && s(r) > tol * s(0)) ++r;

  EigenLD eig;
  eig.U = svd.matrixU().leftCols(r);
  eig.D = s.head(r);
  eig.V = svd.matrixV().leftCols(r);
  eig.n_ref = panel.n();

  // Fix the sign of each singular pair so that results do not depend on the
  // SVD backend: the largest-magnitude entry of each V column is positive.
  for (Index k = 0; k < r; ++k) {
    Index arg = 0;
    eig.V.col(k).cwiseAbs().maxCoeff(&arg);
    if (eig.V(arg, k) < 0) {
      eig.V.col(k) *= -1.0;
      eig.U.col(k) *= -1.0;
    }
  }
  return eig;
}

/// R_ij = sum_k V_ik d_k^2 V_jk.
inline double ld_matrix(const EigenLD& eig, Index i, Index j) {
  if (i < 0 || j < 0 || i >= eig.p() || j >= eig.p()) {
    throw Error("linalg", "IndexOutOfRange",
                "(" + std::to_string(i) + "," + std::to_string(j) + ") outside p=" +
                    std::to_string(eig.p()));
  }
  return (eig.V.row(i).array() * eig.d2().transpose().array() * eig.V.row(j).array()).sum();
}

/// R w without forming R.
inline Vec ld_apply(const EigenLD& eig, const Vec& w) {
  if (w.size() != eig.p()) throw Error("linalg", "ShapeMismatch", "vector length != p");
  return eig.V * (eig.d2().asDiagonal() * (eig.V.transpose() * w));
}

/// Dense R; only sensible for small p.
inline Mat ld_dense(const EigenLD& eig) {
  return eig.V * eig.d2().asDiagonal() * eig.V.transpose();
}

/// Moore-Penrose pseudo-inverse of X^T applied to Z:
///   (X^T)^+ Z = n^{-1/2} U D^{-1} V^T Z.
/// For w in span(U), (X^T)^+ (X^T w) = w.
inline Mat apply_pseudo_inverse_transpose(const EigenLD& eig, const Mat& Z) {
  if (Z.rows() != eig.p()) {
    throw Error("linalg", "ShapeMismatch",
                "Z has " + std::to_string(Z.rows()) + " rows, expected " + std::to_string(eig.p()));
  }
  Mat inner = eig.D.cwiseInverse().asDiagonal() * (eig.V.transpose() * Z);
  return panel_scale(eig.n_ref) * (eig.U * inner);
}

/// Whitening rotation eta = D^{-1} V^T z. For z ~ N(R theta, R),
/// eta ~ N(D V^T theta, I).
inline Vec rotate_to_eigen(const EigenLD& eig, const Vec& z) {
  if (z.size() != eig.p()) {
    throw Error("linalg", "ShapeMismatch",
                "z has " + std::to_string(z.size()) + " entries, expected " + std::to_string(eig.p()));
  }
  return eig.D.cwiseInverse().asDiagonal() * (eig.V.transpose() * z);
}

inline Mat rotate_to_eigen(const EigenLD& eig, const Mat& Z) {
  if (Z.rows() != eig.p()) throw Error("linalg", "ShapeMismatch", "Z rows != p");
  return eig.D.cwiseInverse().asDiagonal() * (eig.V.transpose() * Z);
}

/// Inverse of rotate_to_eigen on span(V): z = V D eta.
inline Mat rotate_from_eigen(const EigenLD& eig, const Mat& eta) {
  if (eta.rows() != eig.rank()) throw Error("linalg", "ShapeMismatch", "eta rows != rank");
  return eig.V * (eig.D.asDiagonal() * eta);
}

}  // namespace cammel
