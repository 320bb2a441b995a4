#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "patchwork/common.hpp"

namespace patchwork {

// Symmetric sparse matrix. Each off-diagonal entry is stored once with
// row <= col; exact zeros are dropped at construction.
class SymSparse {
 public:
  struct Entry {
    int row;
    int col;
    double value;
  };

  SymSparse() = default;
  static SymSparse from_triplets(int n, std::vector<Entry> entries);

  int dim() const { return n_; }
  int nnz() const { return static_cast<int>(entries_.size()); }
  const std::vector<Entry>& entries() const { return entries_; }

  // max |row - col| over stored entries; 0 when empty or diagonal.
  int bandwidth() const;

  // Neighbor lists of the off-diagonal pattern, sorted, no self loops.
  std::vector<std::vector<int>> adjacency() const;

  double diag_mean() const;
  Eigen::MatrixXd to_dense() const;

  // Coordinate text format: a banner, a size line, then "row col value"
  // per entry (1-based, upper triangle).
  void write_matrix_market(std::ostream& os) const;

 private:
  int n_ = 0;
  std::vector<Entry> entries_;  // sorted by (col, row)
};

inline int bandwidth(const SymSparse& a) { return a.bandwidth(); }

// forward[new_position] = old_index
struct Permutation {
  std::vector<int> forward;

  int size() const { return static_cast<int>(forward.size()); }
  bool is_identity() const;
  bool is_bijection() const;
  std::vector<int> inverted() const;

  static Permutation identity(int n);
};

// Reverse Cuthill-McKee ordering of the off-diagonal pattern, one BFS per
// connected component started from a pseudo-peripheral vertex. Falls back
// to the identity whenever reordering would not shrink the bandwidth, so
// bandwidth(P A P^T) <= bandwidth(A) always holds.
Permutation rcm_order(const SymSparse& a);

// Cholesky factorization of A + jitter*I within the band envelope of the
// RCM-reordered matrix. Solves carry the permutation internally, so all
// results are expressed in the original index space.
class SparseCholesky {
 public:
  SparseCholesky() = default;
  SparseCholesky(const SymSparse& a, double jitter);

  // Rebuild from previously computed parts (deserialization).
  static SparseCholesky from_parts(Permutation perm, Eigen::MatrixXd band_store);
  const Eigen::MatrixXd& band_store() const { return band_store_; }

  int dim() const { return n_; }
  int band() const { return band_; }
  const Permutation& permutation() const { return perm_; }
  double logdet() const { return logdet_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

  // half_solve(b) = L^-1 (P b); its squared norm is b^T A^-1 b.
  // finish_solve completes the second triangular sweep and un-permutes.
  Eigen::VectorXd half_solve(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd finish_solve(const Eigen::VectorXd& half) const;

  // P^T (L L^T) P, for factorization-quality checks.
  Eigen::MatrixXd reconstruct() const;

  // Dense view of the banded factor of P (A + jitter I) P^T.
  Eigen::MatrixXd factor_dense() const;

 private:
  int n_ = 0;
  int band_ = 0;
  Permutation perm_;
  std::vector<int> inverse_perm_;
  // Row i of the factor lives in columns [i - band_, i]; entry (i, j) is
  // stored at band_store_(i, j - i + band_).
  Eigen::MatrixXd band_store_;
  double logdet_ = 0.0;
};

// Lower-triangular banded factor of the RCM-reordered A + jitter*I,
// reported densely for inspection and tests.
Eigen::MatrixXd chol_sparse(const SymSparse& a, double jitter);

// K independent symmetric blocks on the diagonal.
class BlockDiag {
 public:
  BlockDiag() = default;
  explicit BlockDiag(std::vector<Eigen::MatrixXd> blocks);

  int dim() const { return dim_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  const Eigen::MatrixXd& block(int k) const { return blocks_[static_cast<std::size_t>(k)]; }
  int offset(int k) const { return offsets_[static_cast<std::size_t>(k)]; }
  int block_dim(int k) const { return static_cast<int>(blocks_[static_cast<std::size_t>(k)].rows()); }

 private:
  std::vector<Eigen::MatrixXd> blocks_;
  std::vector<int> offsets_;
  int dim_ = 0;
};

class BlockDiagCholesky {
 public:
  BlockDiagCholesky() = default;
  explicit BlockDiagCholesky(const BlockDiag& a);

  // Rebuild from previously computed lower factors (deserialization).
  static BlockDiagCholesky from_factors(std::vector<Eigen::MatrixXd> lower_factors);

  int dim() const { return dim_; }
  double logdet() const { return logdet_; }
  int block_count() const { return static_cast<int>(factors_.size()); }
  int offset(int k) const { return offsets_[static_cast<std::size_t>(k)]; }
  // Lower Cholesky factor of block k.
  const Eigen::MatrixXd& factor(int k) const { return factors_[static_cast<std::size_t>(k)]; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  // Solve restricted to a single block, rhs sized like that block.
  Eigen::MatrixXd solve_block(int k, const Eigen::MatrixXd& rhs) const;

 private:
  std::vector<Eigen::MatrixXd> factors_;
  std::vector<int> offsets_;
  int dim_ = 0;
  double logdet_ = 0.0;
};

// C^-1 Y computed block by block; the full matrix is never formed.
Eigen::MatrixXd blockdiag_chol_solve(const BlockDiag& c, const Eigen::MatrixXd& y);

}  // namespace patchwork
