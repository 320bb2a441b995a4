#include "patchwork/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <ostream>

namespace patchwork {

SymSparse SymSparse::from_triplets(int n, std::vector<Entry> entries) {
  if (n < 0) throw_error(ErrorKind::Input, "sym_sparse: negative dimension");
  SymSparse out;
  out.n_ = n;
  for (auto& e : entries) {
    if (e.row < 0 || e.col < 0 || e.row >= n || e.col >= n) {
      throw_error(ErrorKind::Input, "sym_sparse: entry index out of range");
    }
    if (e.row > e.col) std::swap(e.row, e.col);
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  out.entries_.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.value == 0.0) continue;
    if (!out.entries_.empty() && out.entries_.back().row == e.row &&
        out.entries_.back().col == e.col) {
      out.entries_.back().value += e.value;
      if (out.entries_.back().value == 0.0) out.entries_.pop_back();
    } else {
      out.entries_.push_back(e);
    }
  }
  return out;
}

int SymSparse::bandwidth() const {
  int bw = 0;
  for (const auto& e : entries_) bw = std::max(bw, e.col - e.row);
  return bw;
}

std::vector<std::vector<int>> SymSparse::adjacency() const {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_));
  for (const auto& e : entries_) {
    if (e.row == e.col) continue;
    adj[static_cast<std::size_t>(e.row)].push_back(e.col);
    adj[static_cast<std::size_t>(e.col)].push_back(e.row);
  }
  for (auto& nbrs : adj) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
  return adj;
}

double SymSparse::diag_mean() const {
  if (n_ == 0) return 0.0;
  double sum = 0.0;
  for (const auto& e : entries_) {
    if (e.row == e.col) sum += e.value;
  }
  return sum / static_cast<double>(n_);
}

Eigen::MatrixXd SymSparse::to_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_, n_);
  for (const auto& e : entries_) {
    out(e.row, e.col) = e.value;
    out(e.col, e.row) = e.value;
  }
  return out;
}

void SymSparse::write_matrix_market(std::ostream& os) const {
  os << "%%MatrixMarket matrix coordinate real symmetric\n";
  os << n_ << ' ' << n_ << ' ' << entries_.size() << '\n';
  os.precision(17);
  for (const auto& e : entries_) {
    os << (e.row + 1) << ' ' << (e.col + 1) << ' ' << e.value << '\n';
  }
}

bool Permutation::is_identity() const {
  for (int i = 0; i < size(); ++i) {
    if (forward[static_cast<std::size_t>(i)] != i) return false;
  }
  return true;
}

bool Permutation::is_bijection() const {
  std::vector<char> seen(forward.size(), 0);
  for (int v : forward) {
    if (v < 0 || v >= size() || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = 1;
  }
  return true;
}

std::vector<int> Permutation::inverted() const {
  std::vector<int> inv(forward.size());
  for (int i = 0; i < size(); ++i) inv[static_cast<std::size_t>(forward[static_cast<std::size_t>(i)])] = i;
  return inv;
}

Permutation Permutation::identity(int n) {
  Permutation p;
  p.forward.resize(static_cast<std::size_t>(n));
  std::iota(p.forward.begin(), p.forward.end(), 0);
  return p;
}

namespace {

// BFS levels from a root, restricted to unassigned vertices.
struct LevelStructure {
  std::vector<int> order;   // BFS visit order
  std::vector<int> level;   // level per visited vertex, -1 elsewhere
  int eccentricity = 0;
  std::vector<int> last_level;
};

LevelStructure bfs_levels(const std::vector<std::vector<int>>& adj, int root,
                          const std::vector<char>& assigned) {
  LevelStructure ls;
  ls.level.assign(adj.size(), -1);
  std::deque<int> queue{root};
  ls.level[static_cast<std::size_t>(root)] = 0;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    ls.order.push_back(v);
    ls.eccentricity = std::max(ls.eccentricity, ls.level[static_cast<std::size_t>(v)]);
    for (int w : adj[static_cast<std::size_t>(v)]) {
      if (assigned[static_cast<std::size_t>(w)] || ls.level[static_cast<std::size_t>(w)] >= 0) continue;
      ls.level[static_cast<std::size_t>(w)] = ls.level[static_cast<std::size_t>(v)] + 1;
      queue.push_back(w);
    }
  }
  for (int v : ls.order) {
    if (ls.level[static_cast<std::size_t>(v)] == ls.eccentricity) ls.last_level.push_back(v);
  }
  return ls;
}

// George-Liu style search: walk to a minimum-degree vertex of the deepest
// BFS level until the eccentricity stops growing.
int pseudo_peripheral(const std::vector<std::vector<int>>& adj, int start,
                      const std::vector<char>& assigned) {
  int root = start;
  LevelStructure ls = bfs_levels(adj, root, assigned);
  while (true) {
    int candidate = -1;
    std::size_t best_degree = 0;
    for (int v : ls.last_level) {
      const std::size_t deg = adj[static_cast<std::size_t>(v)].size();
      if (candidate < 0 || deg < best_degree) {
        candidate = v;
        best_degree = deg;
      }
    }
    if (candidate < 0 || candidate == root) break;
    LevelStructure next = bfs_levels(adj, candidate, assigned);
    if (next.eccentricity <= ls.eccentricity) break;
    root = candidate;
    ls = std::move(next);
  }
  return root;
}

int bandwidth_under(const SymSparse& a, const std::vector<int>& inverse) {
  int bw = 0;
  for (const auto& e : a.entries()) {
    bw = std::max(bw, std::abs(inverse[static_cast<std::size_t>(e.row)] -
                               inverse[static_cast<std::size_t>(e.col)]));
  }
  return bw;
}

}  // namespace

Permutation rcm_order(const SymSparse& a) {
  const int n = a.dim();
  const auto adj = a.adjacency();
  std::vector<char> assigned(static_cast<std::size_t>(n), 0);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));

  for (int start = 0; start < n; ++start) {
    if (assigned[static_cast<std::size_t>(start)]) continue;
    // pick the minimum-degree vertex of this component as the seed
    LevelStructure comp = bfs_levels(adj, start, assigned);
    int seed = start;
    std::size_t seed_deg = adj[static_cast<std::size_t>(start)].size();
    for (int v : comp.order) {
      if (adj[static_cast<std::size_t>(v)].size() < seed_deg) {
        seed = v;
        seed_deg = adj[static_cast<std::size_t>(v)].size();
      }
    }
    const int root = pseudo_peripheral(adj, seed, assigned);

    // Cuthill-McKee: BFS visiting neighbors in increasing degree order.
    std::deque<int> queue{root};
    assigned[static_cast<std::size_t>(root)] = 1;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      order.push_back(v);
      std::vector<int> nbrs;
      for (int w : adj[static_cast<std::size_t>(v)]) {
        if (!assigned[static_cast<std::size_t>(w)]) nbrs.push_back(w);
      }
      std::sort(nbrs.begin(), nbrs.end(), [&adj](int x, int y) {
        const auto dx = adj[static_cast<std::size_t>(x)].size();
        const auto dy = adj[static_cast<std::size_t>(y)].size();
        return dx != dy ? dx < dy : x < y;
      });
      for (int w : nbrs) {
        assigned[static_cast<std::size_t>(w)] = 1;
        queue.push_back(w);
      }
    }
  }

  std::reverse(order.begin(), order.end());
  Permutation p;
  p.forward = std::move(order);

  // Keep the original ordering unless the reordering strictly helps.
  const int before = a.bandwidth();
  const int after = bandwidth_under(a, p.inverted());
  if (after >= before) return Permutation::identity(n);
  return p;
}

SparseCholesky::SparseCholesky(const SymSparse& a, double jitter) {
  n_ = a.dim();
  perm_ = rcm_order(a);
  inverse_perm_ = perm_.inverted();

  band_ = bandwidth_under(a, inverse_perm_);
  band_store_ = Eigen::MatrixXd::Zero(n_, band_ + 1);

  // scatter the permuted matrix into the band (lower triangle)
  for (const auto& e : a.entries()) {
    int i = inverse_perm_[static_cast<std::size_t>(e.row)];
    int j = inverse_perm_[static_cast<std::size_t>(e.col)];
    if (i < j) std::swap(i, j);
    band_store_(i, j - i + band_) = e.value;
  }
  for (int i = 0; i < n_; ++i) band_store_(i, band_) += jitter;

  // in-place banded Cholesky
  logdet_ = 0.0;
  for (int i = 0; i < n_; ++i) {
    const int j_lo = std::max(0, i - band_);
    for (int j = j_lo; j <= i; ++j) {
      double sum = band_store_(i, j - i + band_);
      const int k_lo = std::max(j_lo, j - band_);
      for (int k = k_lo; k < j; ++k) {
        sum -= band_store_(i, k - i + band_) * band_store_(j, k - j + band_);
      }
      if (j < i) {
        band_store_(i, j - i + band_) = sum / band_store_(j, band_);
      } else {
        if (!(sum > 0.0) || !std::isfinite(sum)) {
          throw_error(ErrorKind::Numeric,
                      "sparse cholesky: non-positive pivot at index " +
                          std::to_string(perm_.forward[static_cast<std::size_t>(i)]));
        }
        band_store_(i, band_) = std::sqrt(sum);
        logdet_ += 2.0 * std::log(band_store_(i, band_));
      }
    }
  }
}

SparseCholesky SparseCholesky::from_parts(Permutation perm, Eigen::MatrixXd band_store) {
  SparseCholesky out;
  out.n_ = static_cast<int>(band_store.rows());
  out.band_ = static_cast<int>(band_store.cols()) - 1;
  if (out.band_ < 0 || perm.size() != out.n_ || !perm.is_bijection()) {
    throw_error(ErrorKind::Input, "sparse cholesky: inconsistent stored factor");
  }
  out.perm_ = std::move(perm);
  out.inverse_perm_ = out.perm_.inverted();
  out.band_store_ = std::move(band_store);
  out.logdet_ = 0.0;
  for (int i = 0; i < out.n_; ++i) {
    const double pivot = out.band_store_(i, out.band_);
    if (!(pivot > 0.0)) {
      throw_error(ErrorKind::Input, "sparse cholesky: stored factor has a non-positive pivot");
    }
    out.logdet_ += 2.0 * std::log(pivot);
  }
  return out;
}

Eigen::VectorXd SparseCholesky::half_solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != n_) throw_error(ErrorKind::Input, "sparse cholesky: rhs size mismatch");
  Eigen::VectorXd y(n_);
  for (int i = 0; i < n_; ++i) y[i] = rhs[perm_.forward[static_cast<std::size_t>(i)]];
  for (int i = 0; i < n_; ++i) {
    double sum = y[i];
    const int k_lo = std::max(0, i - band_);
    for (int k = k_lo; k < i; ++k) sum -= band_store_(i, k - i + band_) * y[k];
    y[i] = sum / band_store_(i, band_);
  }
  return y;
}

Eigen::VectorXd SparseCholesky::finish_solve(const Eigen::VectorXd& half) const {
  if (half.size() != n_) throw_error(ErrorKind::Input, "sparse cholesky: rhs size mismatch");
  Eigen::VectorXd y = half;
  for (int i = n_ - 1; i >= 0; --i) {
    double sum = y[i];
    const int k_hi = std::min(n_ - 1, i + band_);
    for (int k = i + 1; k <= k_hi; ++k) sum -= band_store_(k, i - k + band_) * y[k];
    y[i] = sum / band_store_(i, band_);
  }
  Eigen::VectorXd out(n_);
  for (int i = 0; i < n_; ++i) out[perm_.forward[static_cast<std::size_t>(i)]] = y[i];
  return out;
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& rhs) const {
  return finish_solve(half_solve(rhs));
}

Eigen::MatrixXd SparseCholesky::solve(const Eigen::MatrixXd& rhs) const {
  Eigen::MatrixXd out(rhs.rows(), rhs.cols());
  for (Eigen::Index c = 0; c < rhs.cols(); ++c) out.col(c) = solve(Eigen::VectorXd(rhs.col(c)));
  return out;
}

Eigen::MatrixXd SparseCholesky::reconstruct() const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = std::max(0, i - band_); j <= i; ++j) l(i, j) = band_store_(i, j - i + band_);
  }
  Eigen::MatrixXd permuted = l * l.transpose();
  Eigen::MatrixXd out(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      out(perm_.forward[static_cast<std::size_t>(i)], perm_.forward[static_cast<std::size_t>(j)]) =
          permuted(i, j);
    }
  }
  return out;
}

Eigen::MatrixXd SparseCholesky::factor_dense() const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = std::max(0, i - band_); j <= i; ++j) l(i, j) = band_store_(i, j - i + band_);
  }
  return l;
}

Eigen::MatrixXd chol_sparse(const SymSparse& a, double jitter) {
  return SparseCholesky(a, jitter).factor_dense();
}

BlockDiag::BlockDiag(std::vector<Eigen::MatrixXd> blocks) : blocks_(std::move(blocks)) {
  offsets_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    if (b.rows() != b.cols()) throw_error(ErrorKind::Input, "block_diag: blocks must be square");
    offsets_.push_back(dim_);
    dim_ += static_cast<int>(b.rows());
  }
}

BlockDiagCholesky::BlockDiagCholesky(const BlockDiag& a) : dim_(a.dim()) {
  factors_.reserve(static_cast<std::size_t>(a.block_count()));
  offsets_.reserve(static_cast<std::size_t>(a.block_count()));
  for (int k = 0; k < a.block_count(); ++k) {
    offsets_.push_back(a.offset(k));
    Eigen::LLT<Eigen::MatrixXd> llt(a.block(k));
    if (llt.info() != Eigen::Success) {
      throw_error(ErrorKind::Numeric,
                  "block cholesky: block " + std::to_string(k) + " is not positive definite");
    }
    Eigen::MatrixXd l = llt.matrixL();
    logdet_ += 2.0 * l.diagonal().array().log().sum();
    factors_.push_back(std::move(l));
  }
}

BlockDiagCholesky BlockDiagCholesky::from_factors(std::vector<Eigen::MatrixXd> lower_factors) {
  BlockDiagCholesky out;
  out.factors_ = std::move(lower_factors);
  for (const auto& l : out.factors_) {
    if (l.rows() != l.cols()) {
      throw_error(ErrorKind::Input, "block cholesky: stored factor is not square");
    }
    out.offsets_.push_back(out.dim_);
    out.dim_ += static_cast<int>(l.rows());
    out.logdet_ += 2.0 * l.diagonal().array().log().sum();
  }
  return out;
}

Eigen::VectorXd BlockDiagCholesky::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != dim_) throw_error(ErrorKind::Input, "block cholesky: rhs size mismatch");
  Eigen::VectorXd out(dim_);
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    const auto& l = factors_[k];
    const int off = offsets_[k];
    const int m = static_cast<int>(l.rows());
    Eigen::VectorXd seg = rhs.segment(off, m);
    l.triangularView<Eigen::Lower>().solveInPlace(seg);
    l.triangularView<Eigen::Lower>().transpose().solveInPlace(seg);
    out.segment(off, m) = seg;
  }
  return out;
}

Eigen::MatrixXd BlockDiagCholesky::solve(const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != dim_) throw_error(ErrorKind::Input, "block cholesky: rhs size mismatch");
  Eigen::MatrixXd out(rhs.rows(), rhs.cols());
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    const auto& l = factors_[k];
    const int off = offsets_[k];
    const int m = static_cast<int>(l.rows());
    Eigen::MatrixXd seg = rhs.middleRows(off, m);
    l.triangularView<Eigen::Lower>().solveInPlace(seg);
    l.triangularView<Eigen::Lower>().transpose().solveInPlace(seg);
    out.middleRows(off, m) = seg;
  }
  return out;
}

Eigen::MatrixXd BlockDiagCholesky::solve_block(int k, const Eigen::MatrixXd& rhs) const {
  const auto& l = factors_[static_cast<std::size_t>(k)];
  if (rhs.rows() != l.rows()) throw_error(ErrorKind::Input, "block cholesky: block rhs mismatch");
  Eigen::MatrixXd seg = rhs;
  l.triangularView<Eigen::Lower>().solveInPlace(seg);
  l.triangularView<Eigen::Lower>().transpose().solveInPlace(seg);
  return seg;
}

Eigen::MatrixXd blockdiag_chol_solve(const BlockDiag& c, const Eigen::MatrixXd& y) {
  return BlockDiagCholesky(c).solve(y);
}

}  // namespace patchwork
