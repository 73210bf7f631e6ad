#include "aftgof/data.hpp"
#include "aftgof/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <cmath>
#include <random>
#include <string>

using namespace aftgof;

namespace {

std::filesystem::path write_tmp(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("aftgof_" + name);
  std::ofstream(p) << body;
  return p;
}

std::string error_of(const std::filesystem::path& p) {
  try {
    (void)load_csv(p, "time", "status", {"z"});
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("load_csv reads a small file") {
  const auto p = write_tmp("ok.csv", "time,status,z\n1,1,0.5\n2,0,1.5\n3,1,-1\n");
  const auto d = load_csv(p, "time", "status", {"z"});
  CHECK(d.n() == 3);
  CHECK(d.p() == 1);
  CHECK(d.time()[1] == 2.0);
  CHECK(d.status()[1] == 0);
  CHECK(d.covariates()(2, 0) == -1.0);
  CHECK(d.names() == std::vector<std::string>{"z"});
}

TEST_CASE("load_csv names the offending row") {
  CHECK(error_of(write_tmp("t0.csv", "time,status,z\n1,1,0\n0,1,1\n3,1,2\n")).find("row 2") !=
        std::string::npos);
  CHECK(error_of(write_tmp("st.csv", "time,status,z\n1,1,0\n2,2,1\n3,1,2\n")).find("row 2") !=
        std::string::npos);
  CHECK(error_of(write_tmp("nn.csv", "time,status,z\n1,1,0\n2,1,1\n3,1,abc\n")).find("row 3") !=
        std::string::npos);
  CHECK(error_of(write_tmp("ne.csv", "time,status,z\n1,0,0\n2,0,1\n3,0,2\n")).find("no events") !=
        std::string::npos);
  CHECK(error_of(write_tmp("mc.csv", "time,state,z\n1,1,0\n")).find("status") != std::string::npos);
}

TEST_CASE("dataset invariants") {
  Eigen::MatrixXd z(3, 1);
  z << 1, 2, 3;
  CHECK_THROWS_AS(SurvivalDataset({1, 2, 3}, {1, 0, 1}, Eigen::MatrixXd(2, 1)), DataError);
  CHECK_THROWS_AS(SurvivalDataset({1, -2, 3}, {1, 0, 1}, z), DataError);
  CHECK_THROWS_AS(SurvivalDataset({1, 2, 3}, {0, 0, 0}, z), DataError);
  Eigen::MatrixXd z2(3, 2);
  z2 << 1, 2, 3, 4, 5, 7;
  CHECK_THROWS_AS(SurvivalDataset({1, 2, 3}, {1, 1, 1}, z2), DataError);
}

TEST_CASE("save and load round-trip") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  const int n = 40;
  std::vector<double> t(n);
  std::vector<int> s(n);
  Eigen::MatrixXd z(n, 2);
  for (int i = 0; i < n; ++i) {
    t[i] = std::exp(nd(rng));
    s[i] = i % 3 ? 1 : 0;
    z(i, 0) = nd(rng);
    z(i, 1) = nd(rng) * 1e-7;
  }
  const SurvivalDataset d(t, s, z, {"a", "b"});
  const auto p = std::filesystem::temp_directory_path() / "aftgof_rt.csv";
  save_csv(d, p);
  const auto back = load_csv(p, "time", "status", {"a", "b"});
  CHECK(back.time() == d.time());
  CHECK(back.status() == d.status());
  CHECK(back.covariates() == d.covariates());
}

TEST_CASE("standardize") {
  Eigen::MatrixXd z(4, 2);
  z << 1, 0, 2, 1, 3, 1, 2, 0;
  const SurvivalDataset d({1, 2, 3, 4}, {1, 0, 1, 1}, z, {"x", "b"});
  const auto [s, rec] = standardize(d);
  CHECK(rec.sd(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));

  Eigen::MatrixXd one(3, 1);
  one << 1, 2, 3;
  const auto [s1, rec1] = standardize(SurvivalDataset({1, 2, 3}, {1, 0, 1}, one));
  CHECK(s1.covariates()(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(s1.covariates()(1, 0) == doctest::Approx(0.0));
  CHECK(s1.covariates()(2, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((rec.invert(s.covariates()) - z).cwiseAbs().maxCoeff() < 1e-12);

  const auto [again, rec2] = standardize(s);
  CHECK((again.covariates() - s.covariates()).cwiseAbs().maxCoeff() < 1e-12);

  const auto [ex, rec3] = standardize(d, StandardizeOptions{true});
  CHECK(rec3.exempt[1]);
  CHECK(ex.covariates().col(1) == z.col(1));
  CHECK(d.binary_columns() == std::vector<int>{1});

  Eigen::VectorXd b(2);
  b << 2.0, 3.0;
  const auto raw = rec.coefficients_to_raw(b);
  CHECK(raw(0) == doctest::Approx(2.0 / rec.sd(0)));

  Eigen::MatrixXd c(3, 1);
  c << 4, 4, 4;
  CHECK_THROWS_AS(standardize(SurvivalDataset({1, 2, 3}, {1, 0, 1}, c)), DataError);
}

TEST_CASE("rescale and permute helpers") {
  Eigen::MatrixXd z(3, 1);
  z << 1, 2, 3;
  const SurvivalDataset d({1, 2, 3}, {1, 0, 1}, z);
  CHECK(d.rescaled_time(2.0).time() == std::vector<double>{2, 4, 6});
  const auto q = d.permuted({2, 0, 1});
  CHECK(q.time() == std::vector<double>{3, 1, 2});
  CHECK(q.covariates()(0, 0) == 3.0);
  CHECK(d.censoring_fraction() == doctest::Approx(1.0 / 3.0));
}
