#include <doctest.h>

#include <algorithm>
#include <set>

#include "bks/synthesis.hpp"
#include "support.hpp"

using namespace bks;
using bkstest::tiny_arch;

namespace {

TransferJob make_job(int targets) {
  TransferJob job;
  job.source_sharp = procedural_image(70, 3, 16, 16);
  job.source_blurry = convolve_blur(job.source_sharp, generate_motion_kernel(8, 5, 3));
  for (int i = 0; i < targets; ++i) job.targets.push_back(procedural_image(80 + i, 3, 16, 16));
  return job;
}

PairedDataset dataset(int n) {
  std::vector<ImageTensor> sharps;
  for (int i = 0; i < n; ++i) sharps.push_back(procedural_image(60 + i, 3, 16, 16));
  return synthesize_dataset(sharps, {generate_motion_kernel(1, 5, 3), generate_motion_kernel(2, 5, 3)}, 3);
}

}  // namespace

TEST_SUITE("synthesis") {

TEST_CASE("transfer extracts the kernel once and applies it to every target in order") {
  const KernelSpaceModel model(tiny_arch(), 2);
  const TransferJob job = make_job(5);
  const std::uint64_t before = transfer_kernel_evaluations();
  const std::vector<ImageTensor> out = transfer_blur(model, job);
  CHECK(transfer_kernel_evaluations() == before + 1);
  REQUIRE(out.size() == job.targets.size());
  const BlurKernel k = model.extract_kernel(job.source_sharp, job.source_blurry);
  for (std::size_t j = 0; j < out.size(); ++j) {
    CHECK(out[j].shape() == job.targets[j].shape());
    CHECK(out[j] == model.apply_blur(job.targets[j], k));
  }
}

TEST_CASE("transfer output does not depend on the worker count") {
  const KernelSpaceModel model(tiny_arch(), 2);
  const TransferJob job = make_job(7);
  const auto one = transfer_blur(model, job, 1);
  for (int threads : {2, 3, 16}) {
    const std::uint64_t before = transfer_kernel_evaluations();
    CHECK(transfer_blur(model, job, threads) == one);
    CHECK(transfer_kernel_evaluations() == before + 1);
  }
}

TEST_CASE("transfer edge cases") {
  const KernelSpaceModel model(tiny_arch(), 2);
  CHECK(transfer_blur(model, make_job(0)).empty());
  TransferJob bad = make_job(2);
  bad.targets.push_back(procedural_image(1, 3, 8, 8));
  CHECK_THROWS(transfer_blur(model, bad));
  TransferJob mismatched = make_job(1);
  mismatched.source_blurry = procedural_image(1, 3, 32, 32);
  CHECK_THROWS(transfer_blur(model, mismatched));
  // Targets may differ in size from the source when each is divisible.
  TransferJob sized = make_job(0);
  sized.targets.push_back(procedural_image(3, 3, 16, 16));
  CHECK(transfer_blur(model, sized).size() == 1);
}

TEST_CASE("donor assignment is a reproducible derangement") {
  CHECK(donor_assignment(1, 9) == std::vector<std::size_t>{0});
  CHECK_THROWS(donor_assignment(0, 9));
  for (std::size_t n : {2u, 3u, 5u, 8u, 31u}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto d = donor_assignment(n, seed);
      REQUIRE(d.size() == n);
      REQUIRE(std::set<std::size_t>(d.begin(), d.end()).size() == n);
      for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(d[i] < n);
        REQUIRE(d[i] != i);
      }
      REQUIRE(donor_assignment(n, seed) == d);
    }
  }
  std::set<std::vector<std::size_t>> distinct;
  for (std::uint64_t seed = 0; seed < 20; ++seed) distinct.insert(donor_assignment(6, seed));
  CHECK(distinct.size() > 1);
}

TEST_CASE("swap_dataset re-blurs each sharp image with its donor's kernel") {
  const KernelSpaceModel model(tiny_arch(), 2);
  const PairedDataset data = dataset(5);
  const PairedDataset swapped = swap_dataset(model, data, 4);
  const auto donors = donor_assignment(5, 4);
  REQUIRE(swapped.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const ImagePair& donor = data[donors[i]];
    CHECK(swapped[i].id == data[i].id + "__from__" + donor.id);
    CHECK(swapped[i].sharp == data[i].sharp);
    CHECK(swapped[i].blurry == model.apply_blur(data[i].sharp, model.extract_kernel(donor.sharp, donor.blurry)));
  }
  const PairedDataset again = swap_dataset(model, data, 4, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(again[i].id == swapped[i].id);
    CHECK(again[i].blurry == swapped[i].blurry);
  }
}

TEST_CASE("swap_dataset with one pair is self-transfer") {
  const KernelSpaceModel model(tiny_arch(), 2);
  const PairedDataset data = dataset(1);
  const PairedDataset s = swap_dataset(model, data, 0);
  REQUIRE(s.size() == 1);
  CHECK(s[0].id == data[0].id + "__from__" + data[0].id);
  CHECK(s[0].blurry == model.reconstruct(data[0].sharp, data[0].blurry));
  CHECK_THROWS(swap_dataset(model, PairedDataset{}, 0));
}

}  // TEST_SUITE
