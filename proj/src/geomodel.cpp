#include "co2hm/geomodel.hpp"

#include <fftw3.h>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <sstream>

namespace co2hm {

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(base, h);
}

// Metaparameters -------------------------------------------------------------------

const std::array<const char*, Metaparameters::size>& Metaparameters::names() {
  static const std::array<const char*, size> n{"mu_logk", "sigma_logk", "log10_a_r", "d",
                                               "e",       "E_s",        "E_o"};
  return n;
}

std::array<double, Metaparameters::size> Metaparameters::to_sampling() const {
  return {mu_logk, sigma_logk, std::log10(a_r), d, e, E_s, E_o};
}

Metaparameters Metaparameters::from_sampling(const std::array<double, size>& v) {
  return {v[0], v[1], std::pow(10.0, v[2]), v[3], v[4], v[5], v[6]};
}

bool PriorBox::contains(const std::array<double, Metaparameters::size>& v) const {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= lower[i] && v[i] <= upper[i])) return false;
  }
  return true;
}

std::array<double, Metaparameters::size> PriorBox::center() const {
  std::array<double, Metaparameters::size> c{};
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
  return c;
}

void PriorBox::validate(const Metaparameters& m) const {
  const auto v = m.to_sampling();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= lower[i] && v[i] <= upper[i])) {
      std::ostringstream os;
      os << "metaparameter " << Metaparameters::names()[i] << " = " << v[i]
         << " outside prior support [" << lower[i] << ", " << upper[i] << "]";
      throw DomainError(os.str());
    }
  }
}

Metaparameters sample_prior_metaparameters(std::uint64_t seed, const PriorBox& prior) {
  Rng rng(seed);
  std::array<double, Metaparameters::size> v{};
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uniform_real_distribution<double> u(prior.lower[i], prior.upper[i]);
    v[i] = u(rng);
  }
  return Metaparameters::from_sampling(v);
}

// Grids -------------------------------------------------------------------------

void GridSpec::validate() const {
  if (nx < 2 || ny < 2 || nz < 2) throw DomainError("grid cell counts must be >= 2");
  if (!(dx > 0 && dy > 0 && dz > 0)) throw DomainError("grid cell dimensions must be positive");
  if (!(depth_top > 0)) throw DomainError("aquifer depth must be positive");
  if (!(boundary_pv_multiplier >= 1.0)) throw DomainError("boundary_pv_multiplier must be >= 1");
  if (!(ring_width >= 0.0)) throw DomainError("ring_width must be non-negative");
}

GridSpec default_fine_grid() { return GridSpec{}; }

GridSpec default_coarse_grid() {
  const GridSpec fine = default_fine_grid();
  GridSpec g = fine;
  g.nx = 8;
  g.ny = 8;
  g.nz = 2;
  g.dx = fine.dx * fine.nx / g.nx;
  g.dy = fine.dy * fine.ny / g.ny;
  g.dz = fine.dz * fine.nz / g.nz;
  // keep the fine ring geometry so both grids see the same outer support
  g.ring_width = fine.ring_width > 0 ? fine.ring_width : fine.dx;
  return g;
}

// Gaussian random fields -------------------------------------------------------------

double exponential_covariance(double hx, double hy, double hz, const CorrelationLengths& c) {
  const double h = std::sqrt((hx / c.lx) * (hx / c.lx) + (hy / c.ly) * (hy / c.ly) +
                             (hz / c.lz) * (hz / c.lz));
  return std::exp(-3.0 * h);
}

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

int next_fft_size(int n) {
  // smallest 2^a 3^b 5^c >= n
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int p : {2, 3, 5}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

}  // namespace

struct GaussianFieldSampler::Impl {
  CorrelationLengths corr;
  // circulant embedding
  int mx = 0, my = 0, mz = 0;
  std::vector<double> sqrt_eig;  // sqrt(lambda / M)
  // dense fallback
  Eigen::MatrixXd chol;
  bool circulant = false;
};

GaussianFieldSampler::GaussianFieldSampler(int nx, int ny, int nz, CorrelationLengths corr)
    : nx_(nx), ny_(ny), nz_(nz), impl_(std::make_unique<Impl>()) {
  if (nx < 1 || ny < 1 || nz < 1) throw DomainError("field dimensions must be positive");
  if (!(corr.lx > 0 && corr.ly > 0 && corr.lz > 0))
    throw DomainError("correlation lengths must be positive");
  if (corr.lx >= nx || corr.ly >= ny || corr.lz >= nz)
    throw DomainError("correlation length must be smaller than the domain extent");
  impl_->corr = corr;

  for (int pad = 2; pad <= 8; pad *= 2) {
    const int mx = nx == 1 ? 1 : next_fft_size(pad * nx);
    const int my = ny == 1 ? 1 : next_fft_size(pad * ny);
    const int mz = nz == 1 ? 1 : next_fft_size(pad * nz);
    const std::size_t m = static_cast<std::size_t>(mx) * my * mz;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * m));
    for (int k = 0; k < mz; ++k) {
      const double hz = std::min(k, mz - k);
      for (int j = 0; j < my; ++j) {
        const double hy = std::min(j, my - j);
        for (int i = 0; i < mx; ++i) {
          const double hx = std::min(i, mx - i);
          const std::size_t idx = (static_cast<std::size_t>(k) * my + j) * mx + i;
          buf[idx][0] = exponential_covariance(hx, hy, hz, corr);
          buf[idx][1] = 0.0;
        }
      }
    }
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_plan plan = fftw_plan_dft_3d(mz, my, mx, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
      fftw_execute(plan);
      fftw_destroy_plan(plan);
    }
    double max_eig = 0.0, min_eig = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      max_eig = std::max(max_eig, buf[i][0]);
      min_eig = std::min(min_eig, buf[i][0]);
    }
    if (min_eig >= -1e-10 * max_eig) {
      impl_->mx = mx;
      impl_->my = my;
      impl_->mz = mz;
      impl_->sqrt_eig.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        impl_->sqrt_eig[i] = std::sqrt(std::max(buf[i][0], 0.0) / static_cast<double>(m));
      }
      impl_->circulant = true;
      fftw_free(buf);
      return;
    }
    fftw_free(buf);
  }

  const int n = nx * ny * nz;
  if (n >= 10000)
    throw DomainError("circulant embedding is not positive semidefinite and the grid is too "
                      "large for the dense fallback");
  Eigen::MatrixXd cov(n, n);
  for (int a = 0; a < n; ++a) {
    const int ai = a % nx, aj = (a / nx) % ny, ak = a / (nx * ny);
    for (int b = 0; b <= a; ++b) {
      const int bi = b % nx, bj = (b / nx) % ny, bk = b / (nx * ny);
      cov(a, b) = cov(b, a) = exponential_covariance(ai - bi, aj - bj, ak - bk, corr);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error("dense covariance factorization failed");
  impl_->chol = llt.matrixL();
}

GaussianFieldSampler::~GaussianFieldSampler() = default;
GaussianFieldSampler::GaussianFieldSampler(GaussianFieldSampler&&) noexcept = default;
GaussianFieldSampler& GaussianFieldSampler::operator=(GaussianFieldSampler&&) noexcept = default;

bool GaussianFieldSampler::uses_circulant_embedding() const { return impl_->circulant; }

Eigen::VectorXd GaussianFieldSampler::sample(std::uint64_t seed) const {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  const int n = size();
  Eigen::VectorXd out(n);
  if (!impl_->circulant) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = normal(rng);
    out = impl_->chol * z;
    return out;
  }
  const int mx = impl_->mx, my = impl_->my, mz = impl_->mz;
  const std::size_t m = static_cast<std::size_t>(mx) * my * mz;
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * m));
  for (std::size_t i = 0; i < m; ++i) {
    const double a = normal(rng);
    const double b = normal(rng);
    buf[i][0] = impl_->sqrt_eig[i] * a;
    buf[i][1] = impl_->sqrt_eig[i] * b;
  }
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_3d(mz, my, mx, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  for (int k = 0; k < nz_; ++k)
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i)
        out[i + nx_ * (j + ny_ * k)] = buf[(static_cast<std::size_t>(k) * my + j) * mx + i][0];
  fftw_free(buf);
  return out;
}

Eigen::VectorXd sample_gaussian_field(const GridSpec& grid, const CorrelationLengths& corr,
                                      std::uint64_t seed) {
  return GaussianFieldSampler(grid.nx, grid.ny, grid.nz, corr).sample(seed);
}

// PCA --------------------------------------------------------------------------

PcaBasis build_pca_basis(const Eigen::MatrixXd& realizations, int n_d) {
  const Eigen::Index n_s = realizations.rows();
  const Eigen::Index n_r = realizations.cols();
  const Eigen::Index max_rank = std::min<Eigen::Index>(n_s, n_r - 1);
  if (n_r < 2) throw DomainError("PCA needs at least two realizations");
  if (n_d < 1 || n_d > max_rank) {
    std::ostringstream os;
    os << "requested PCA dimension " << n_d << " exceeds the maximum admissible rank "
       << max_rank << " (min(n_s, n_r - 1))";
    throw DomainError(os.str());
  }
  PcaBasis pca;
  pca.mean_field = realizations.rowwise().mean();
  const Eigen::MatrixXd centered = realizations.colwise() - pca.mean_field;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_r - 1));
  pca.singular_values = svd.singularValues().head(n_d);
  pca.basis = svd.matrixU().leftCols(n_d) * (pca.singular_values * scale).asDiagonal();
  return pca;
}

Eigen::VectorXd generate_pca_realization(const PcaBasis& pca, const LatentVector& xi) {
  if (xi.size() != pca.n_d()) {
    std::ostringstream os;
    os << "latent vector has length " << xi.size() << " but the PCA basis has " << pca.n_d()
       << " columns";
    throw DimensionError(os.str());
  }
  return pca.basis * xi.xi + pca.mean_field;
}

// Geomodel ----------------------------------------------------------------------

Eigen::VectorXd storage_log_permeability(const Metaparameters& meta, std::span<const double> y) {
  Eigen::VectorXd logk(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i)
    logk[static_cast<Eigen::Index>(i)] = meta.sigma_logk * y[i] + meta.mu_logk;
  return logk;
}

Geomodel assemble_geomodel(const Metaparameters& meta, std::span<const double> y_pca,
                           const GridSpec& grid, const PriorBox& prior,
                           const FixedRockTable& fixed) {
  grid.validate();
  prior.validate(meta);
  if (static_cast<int>(y_pca.size()) != grid.aquifer_cells()) {
    std::ostringstream os;
    os << "PCA field has " << y_pca.size() << " entries but the storage aquifer has "
       << grid.aquifer_cells() << " cells";
    throw DimensionError(os.str());
  }
  Geomodel m;
  m.grid = grid;
  const auto n = static_cast<std::size_t>(grid.sim_cells());
  m.kx.assign(n, 0.0);
  m.ky.assign(n, 0.0);
  m.kz.assign(n, 0.0);
  m.phi.assign(n, 0.0);
  m.E.assign(n, meta.E_s);
  m.nu.assign(n, fixed.nu_storage);
  m.region.assign(n, Region::surrounding);

  double phi_sum = 0.0;
  for (int k = 0; k < grid.nz; ++k)
    for (int j = 0; j < grid.ny; ++j)
      for (int i = 0; i < grid.nx; ++i) {
        const auto c = static_cast<std::size_t>(grid.sim_index_of_aquifer(i, j, k));
        const double y = y_pca[static_cast<std::size_t>(grid.aquifer_index(i, j, k))];
        const double perm = std::exp(meta.sigma_logk * y + meta.mu_logk);
        m.kx[c] = m.ky[c] = perm;
        m.kz[c] = meta.a_r * perm;
        m.phi[c] = std::clamp(meta.d * std::log(perm) + meta.e, fixed.phi_min, fixed.phi_max);
        m.region[c] = Region::storage;
        phi_sum += m.phi[c];
      }
  m.mean_storage_phi = phi_sum / grid.aquifer_cells();

  const double k_sur = std::exp(meta.mu_logk);
  for (std::size_t c = 0; c < n; ++c) {
    if (m.region[c] != Region::surrounding) continue;
    m.kx[c] = m.ky[c] = m.kz[c] = k_sur;
    m.phi[c] = m.mean_storage_phi;
  }
  m.overburden = fixed.overburden;
  m.overburden.E = meta.E_o;
  m.underburden = fixed.underburden;
  m.underburden.E = meta.E_o;
  return m;
}

namespace {

/// Geometric mean of the arithmetic-harmonic and harmonic-arithmetic bounds
/// for flow along `axis` through a block with local extents n[0..2].
template <class Value>
double bounded_block_permeability(const std::array<int, 3>& n, int axis, Value value) {
  const int a = axis, b = (axis + 1) % 3, c = (axis + 2) % 3;
  std::array<int, 3> idx{};
  // arithmetic over lines of the harmonic along each line
  double upper = 0.0;
  for (int ib = 0; ib < n[b]; ++ib)
    for (int ic = 0; ic < n[c]; ++ic) {
      double inv = 0.0;
      for (int ia = 0; ia < n[a]; ++ia) {
        idx[a] = ia, idx[b] = ib, idx[c] = ic;
        inv += 1.0 / value(idx[0], idx[1], idx[2]);
      }
      upper += n[a] / inv;
    }
  upper /= n[b] * n[c];
  // harmonic over slabs of the arithmetic within each slab
  double inv = 0.0;
  for (int ia = 0; ia < n[a]; ++ia) {
    double sum = 0.0;
    for (int ib = 0; ib < n[b]; ++ib)
      for (int ic = 0; ic < n[c]; ++ic) {
        idx[a] = ia, idx[b] = ib, idx[c] = ic;
        sum += value(idx[0], idx[1], idx[2]);
      }
    inv += (n[b] * n[c]) / sum;
  }
  const double lower = n[a] / inv;
  return std::sqrt(upper * lower);
}

}  // namespace

const char* to_string(PermeabilityAveraging a) {
  return a == PermeabilityAveraging::geometric ? "geometric" : "flow_bounds";
}

PermeabilityAveraging permeability_averaging_from_string(const std::string& s) {
  if (s == "geometric") return PermeabilityAveraging::geometric;
  if (s == "flow_bounds") return PermeabilityAveraging::flow_bounds;
  throw DomainError("unknown permeability averaging '" + s + "' (geometric, flow_bounds)");
}

Geomodel restrict_geomodel(const Geomodel& fine, const GridSpec& coarse,
                           PermeabilityAveraging averaging) {
  const GridSpec& fg = fine.grid;
  coarse.validate();
  if (fg.nx % coarse.nx || fg.ny % coarse.ny || fg.nz % coarse.nz)
    throw DomainError("coarse grid dimensions must divide the fine grid dimensions");
  const int rx = fg.nx / coarse.nx, ry = fg.ny / coarse.ny, rz = fg.nz / coarse.nz;
  if (std::abs(coarse.dx - fg.dx * rx) > 1e-9 * fg.dx ||
      std::abs(coarse.dy - fg.dy * ry) > 1e-9 * fg.dy ||
      std::abs(coarse.dz - fg.dz * rz) > 1e-9 * fg.dz)
    throw DomainError("coarse grid must cover the same aquifer extent as the fine grid");

  Geomodel m;
  m.grid = coarse;
  const auto n = static_cast<std::size_t>(coarse.sim_cells());
  m.kx.assign(n, 0.0);
  m.ky.assign(n, 0.0);
  m.kz.assign(n, 0.0);
  m.phi.assign(n, 0.0);
  m.E.assign(n, 0.0);
  m.nu.assign(n, 0.0);
  m.region.assign(n, Region::surrounding);
  const double inv = 1.0 / (rx * ry * rz);

  // ring cells copy the (region-constant) fine ring properties
  const auto ring_src = static_cast<std::size_t>(fg.sim_index(0, 0, 0));
  for (std::size_t c = 0; c < n; ++c) {
    m.kx[c] = fine.kx[ring_src];
    m.ky[c] = fine.ky[ring_src];
    m.kz[c] = fine.kz[ring_src];
    m.phi[c] = fine.phi[ring_src];
    m.E[c] = fine.E[ring_src];
    m.nu[c] = fine.nu[ring_src];
  }
  double phi_sum = 0.0;
  for (int K = 0; K < coarse.nz; ++K)
    for (int J = 0; J < coarse.ny; ++J)
      for (int I = 0; I < coarse.nx; ++I) {
        double lx = 0, ly = 0, lz = 0, phi = 0, E = 0, nu = 0;
        for (int k = K * rz; k < (K + 1) * rz; ++k)
          for (int j = J * ry; j < (J + 1) * ry; ++j)
            for (int i = I * rx; i < (I + 1) * rx; ++i) {
              const auto f = static_cast<std::size_t>(fg.sim_index_of_aquifer(i, j, k));
              lx += std::log(fine.kx[f]);
              ly += std::log(fine.ky[f]);
              lz += std::log(fine.kz[f]);
              phi += fine.phi[f];
              E += fine.E[f];
              nu += fine.nu[f];
            }
        const auto c = static_cast<std::size_t>(coarse.sim_index_of_aquifer(I, J, K));
        if (averaging == PermeabilityAveraging::geometric) {
          m.kx[c] = std::exp(lx * inv);
          m.ky[c] = std::exp(ly * inv);
          m.kz[c] = std::exp(lz * inv);
        } else {
          const std::array<int, 3> ext{rx, ry, rz};
          auto field = [&](const std::vector<double>& k) {
            return [&, kp = &k](int i, int j, int kk) {
              return (*kp)[static_cast<std::size_t>(
                  fg.sim_index_of_aquifer(I * rx + i, J * ry + j, K * rz + kk))];
            };
          };
          m.kx[c] = bounded_block_permeability(ext, 0, field(fine.kx));
          m.ky[c] = bounded_block_permeability(ext, 1, field(fine.ky));
          m.kz[c] = bounded_block_permeability(ext, 2, field(fine.kz));
        }
        m.phi[c] = phi * inv;
        m.E[c] = E * inv;
        m.nu[c] = nu * inv;
        m.region[c] = Region::storage;
        phi_sum += m.phi[c];
      }
  m.mean_storage_phi = phi_sum / coarse.aquifer_cells();
  m.overburden = fine.overburden;
  m.underburden = fine.underburden;
  return m;
}

}  // namespace co2hm
