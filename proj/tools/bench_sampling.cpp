#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "cvcert/fock.hpp"
#include "cvcert/gaussian.hpp"
#include "cvcert/symplectic.hpp"

using namespace cvcert;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Times one sampler pair and checks the parallel output against the serial
// reference bit for bit; any drift would invalidate seeded replay.
template <typename Parallel, typename Serial>
int report(const char* label, long long rows, Parallel parallel, Serial serial) {
  auto start = std::chrono::steady_clock::now();
  const Mat par = parallel();
  const double t_par = seconds_since(start);

  start = std::chrono::steady_clock::now();
  const Mat ser = serial();
  const double t_ser = seconds_since(start);

  const bool identical = par.rows() == ser.rows() && par.cols() == ser.cols() &&
                         (par.array() == ser.array()).all();
  std::printf("%-22s %10lld rows  serial %7.3fs (%8.0f rows/s)  parallel %7.3fs (%8.0f rows/s)"
              "  speedup %4.2fx  %s\n",
              label, rows, t_ser, rows / t_ser, t_par, rows / t_par, t_ser / t_par,
              identical ? "bit-identical" : "MISMATCH");
  return identical ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  long long gaussian_count = 2'000'000;
  long long fock_count = 200'000;
  if (argc > 1) gaussian_count = std::atoll(argv[1]);
  if (argc > 2) fock_count = std::atoll(argv[2]);
  if (gaussian_count < 1 || fock_count < 1) {
    std::fprintf(stderr, "usage: %s [gaussian_samples] [fock_samples]\n", argv[0]);
    return 2;
  }

  NetworkSpec net;
  net.m = 4;
  net.nvec = {0, 0, 0, 0};
  net.transform = random_symplectic(4, 2, 1.5, 42);
  net.transform.x(0) = 0.7;
  const GaussianState gauss = prepare_gaussian_target(net);
  const std::vector<double> gauss_angles = {0.0, 1.5707963267948966, 0.7853981633974483, 0.3};

  NetworkSpec split;
  split.m = 2;
  split.nvec = {1, 0};
  split.transform = SymplecticTransform::identity(2);
  split.transform.O = beamsplitter(2, 1, 2, 0.7853981633974483);
  const FockState photon = prepare_lo_target(split, 10);
  const std::vector<double> fock_angles = {0.1, 1.2};

  // Warm-up pass so thread-pool spin-up stays out of the timings.
  sample_homodyne_gaussian(gauss, gauss_angles, 1000, 1);
  sample_homodyne_fock(photon, fock_angles, 1000, 1);

  int failures = 0;
  failures += report(
      "gaussian homodyne", gaussian_count,
      [&] { return sample_homodyne_gaussian(gauss, gauss_angles, static_cast<int>(gaussian_count), 7); },
      [&] {
        return sample_homodyne_gaussian_serial(gauss, gauss_angles,
                                               static_cast<int>(gaussian_count), 7);
      });
  failures += report(
      "fock homodyne", fock_count,
      [&] { return sample_homodyne_fock(photon, fock_angles, static_cast<int>(fock_count), 9); },
      [&] {
        return sample_homodyne_fock_serial(photon, fock_angles, static_cast<int>(fock_count), 9);
      });
  return failures == 0 ? 0 : 1;
}
