// Benchmarks the serial reference forward pass against the OpenMP-parallel
// path on hydrocarbon chains and verifies the two agree bit-for-bit.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#ifdef UNITE_HAVE_OPENMP
#include <omp.h>
#endif

#include "unite/net.hpp"

using namespace unite;

namespace {

Geometry chain(int n_heavy) {
  // zig-zag C chain capped with H, roughly tetrahedral spacing in Bohr
  Geometry g;
  for (int k = 0; k < n_heavy; ++k) {
    g.Z.push_back(6);
    g.x.emplace_back(2.4 * k, (k % 2) ? 1.1 : 0.0, 0.0);
    g.Z.push_back(1);
    g.x.emplace_back(2.4 * k, (k % 2) ? 1.1 : 0.0, 2.0);
  }
  return g;
}

double time_forward(const NBodyTensor& T, const TypedParams<double>& P,
                    const ModelConfig& cfg, bool parallel, int reps, double* checksum) {
  ForwardOptions opts;
  opts.parallel = parallel;
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const Rep<double> h = forward<double>(T, P, cfg, opts);
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    double s = 0.0;
    for (double v : h.v) s += v;
    *checksum = s;
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  int max_heavy = 24;
  int reps = 3;
  for (int k = 1; k < argc; ++k) {
    if (!std::strcmp(argv[k], "--max-heavy") && k + 1 < argc) max_heavy = std::atoi(argv[++k]);
    if (!std::strcmp(argv[k], "--reps") && k + 1 < argc) reps = std::atoi(argv[++k]);
  }
#ifdef UNITE_HAVE_OPENMP
  std::printf("openmp: %d threads\n", omp_get_max_threads());
#else
  std::printf("openmp: unavailable (parallel path falls back to serial)\n");
#endif

  const ModelConfig cfg = ModelConfig::full();
  const ParamStore store = build_params(cfg, 1);
  const auto P = materialize<double>(store);

  std::printf("%8s %8s %12s %12s %8s %10s\n", "heavy", "atoms", "serial_s", "parallel_s",
              "speedup", "bit_equal");
  bool all_equal = true;
  for (int n = 4; n <= max_heavy; n *= 2) {
    const Geometry g = chain(n);
    const FeaturizeResult fr = featurize(g);
    double sum_s = 0.0, sum_p = 0.0;
    const double ts = time_forward(fr.T, P, cfg, false, reps, &sum_s);
    const double tp = time_forward(fr.T, P, cfg, true, reps, &sum_p);

    ForwardOptions serial, parallel;
    parallel.parallel = true;
    const Rep<double> hs = forward<double>(fr.T, P, cfg, serial);
    const Rep<double> hp = forward<double>(fr.T, P, cfg, parallel);
    bool equal = hs.v.size() == hp.v.size();
    for (std::size_t k = 0; equal && k < hs.v.size(); ++k) equal = hs.v[k] == hp.v[k];
    all_equal = all_equal && equal;

    std::printf("%8d %8d %12.4f %12.4f %8.2f %10s\n", n, g.n_atoms(), ts, tp, ts / tp,
                equal ? "yes" : "NO");
  }
  return all_equal ? 0 : 1;
}
