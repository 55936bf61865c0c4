#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "co2hm/io.hpp"
#include "co2hm/pipeline.hpp"

using namespace co2hm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("co2hm_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("matrix container round trip") {
  const fs::path d = scratch_dir("matrix");
  const Eigen::MatrixXd M = Eigen::MatrixXd::Random(7, 3);
  io::write_matrix(d / "m.bin", M);
  CHECK(io::read_matrix(d / "m.bin") == M);
  CHECK(fs::file_size(d / "m.bin") == 32u + 21u * 8u);
  io::write_matrix(d / "empty.bin", Eigen::MatrixXd(0, 4));
  CHECK(io::read_matrix(d / "empty.bin").cols() == 4);

  std::ofstream(d / "bad.bin") << "not a matrix";
  CHECK_THROWS_AS(io::read_matrix(d / "bad.bin"), io::IoError);
  CHECK_THROWS_AS(io::read_matrix(d / "missing.bin"), io::IoError);
}

TEST_CASE("chain records round trip and torn tails are dropped") {
  const fs::path d = scratch_dir("chain");
  ChainRecord a{10, {1, 2, 3, 4, 5, 6, 7}, -3.5, true, false};
  ChainRecord b{20, {7, 6, 5, 4, 3, 2, 1}, -1.25, false, true};
  {
    io::ChainRecordWriter w(d / "c.rec", false);
    w.write(a);
    w.write(b);
  }
  CHECK(fs::file_size(d / "c.rec") == 2 * io::kChainRecordBytes);
  auto r = io::read_chain_records(d / "c.rec");
  REQUIRE(r.size() == 2u);
  CHECK(r[1].iteration == 20);
  CHECK(r[1].theta == b.theta);
  CHECK(r[0].loglik == -3.5);
  CHECK(r[0].accepted_latent);
  CHECK_FALSE(r[0].accepted_meta);

  // simulate a crash halfway through a record, then append
  {
    std::ofstream f(d / "c.rec", std::ios::binary | std::ios::app);
    f.write("partial", 7);
  }
  {
    io::ChainRecordWriter w(d / "c.rec", true);
    w.write(a);
  }
  r = io::read_chain_records(d / "c.rec");
  CHECK(r.size() == 3u);
  CHECK(r[2].iteration == 10);
}

TEST_CASE("json and csv output") {
  const fs::path d = scratch_dir("json");
  io::write_json(d / "a.json", {{"x", 1}, {"y", "z"}});
  CHECK(io::read_json(d / "a.json")["y"] == "z");
  {
    io::CsvWriter w(d / "t.csv", {"a", "b"});
    w << 1 << std::string("q");
    w.end_row();
  }
  std::ifstream in(d / "t.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "a,b");
  CHECK(row == "1,q");
  CHECK(io::fnv1a_hex("") == "cbf29ce484222325");
  CHECK_THROWS_AS(io::require(d / "nope"), io::IoError);
}

TEST_CASE("config files are strict") {
  const RunConfig c = parse_config(
      "[experiment]\nname = t\nseed = 5\n[prior]\nE_s_gpa = 6, 18\n[mcmc]\nsweeps = 100\npcn_variant = literal\n"
      "bias_correction = no\n[noise]\nsigma_p_mpa = 0.1\n");
  CHECK(c.experiment == "t");
  CHECK(c.seed == 5u);
  CHECK(c.prior.lower[5] == doctest::Approx(6e9));
  CHECK(c.prior.upper[5] == doctest::Approx(18e9));
  CHECK(c.mcmc.sweeps == 100);
  CHECK(c.mcmc.pcn_variant == PcnVariant::literal);
  CHECK_FALSE(c.bias_correction);
  CHECK(c.noise.sigma_p == doctest::Approx(1e5));
  CHECK(c.hash() != RunConfig{}.hash());
  CHECK(RunConfig{}.hash() == RunConfig{}.hash());

  CHECK_THROWS_AS(parse_config("[mcmc]\nsweep = 100\n"), DomainError);
  CHECK_THROWS_AS(parse_config("[mcmcc]\nsweeps = 100\n"), DomainError);
  CHECK_THROWS_AS(parse_config("[mcmc]\nsweeps = many\n"), DomainError);
  CHECK_THROWS_AS(parse_config("[prior]\nd = 0.02\n"), DomainError);

  const RunConfig g = parse_config("[grid]\nfine_nx = 16\nfine_ny = 16\nfine_nz = 4\ncoarse_nx = 4\ncoarse_ny = 4\ncoarse_nz = 2\n");
  CHECK(g.setup.coarse.dx == doctest::Approx(4 * g.setup.fine.dx));
  CHECK(g.setup.layout.n_pressure_points() == 4);
}
