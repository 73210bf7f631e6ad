#include "aftgof/data.hpp"

#include "aftgof/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace aftgof {

namespace {

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(begin, end - begin + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view rest(line);
  while (true) {
    auto comma = rest.find(',');
    cells.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return cells;
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

SurvivalDataset::SurvivalDataset(std::vector<double> time, std::vector<int> status,
                                 Eigen::MatrixXd covariates, std::vector<std::string> names)
    : time_(std::move(time)),
      status_(std::move(status)),
      covariates_(std::move(covariates)),
      names_(std::move(names)) {
  const auto n = time_.size();
  if (status_.size() != n || static_cast<std::size_t>(covariates_.rows()) != n) {
    throw DataError("time, status and covariate rows differ in length");
  }
  if (covariates_.cols() < 1) throw DataError("at least one covariate is required");
  if (names_.empty()) {
    for (Eigen::Index q = 0; q < covariates_.cols(); ++q) names_.push_back("z" + std::to_string(q + 1));
  }
  if (static_cast<Eigen::Index>(names_.size()) != covariates_.cols()) {
    throw DataError("covariate name count does not match covariate columns");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(time_[i]) || time_[i] <= 0.0) {
      throw DataError("row " + std::to_string(i + 1) + ": time must be positive and finite");
    }
    if (status_[i] != 0 && status_[i] != 1) {
      throw DataError("row " + std::to_string(i + 1) + ": status must be 0 or 1");
    }
  }
  if (!covariates_.allFinite()) throw DataError("covariates contain non-finite values");
  if (std::none_of(status_.begin(), status_.end(), [](int s) { return s == 1; })) {
    throw DataError("no events: at least one status must be 1");
  }
  if (static_cast<Eigen::Index>(n) < covariates_.cols() + 2) {
    throw DataError("need n >= p + 2 subjects");
  }
}

int SurvivalDataset::event_count() const {
  return static_cast<int>(std::count(status_.begin(), status_.end(), 1));
}

double SurvivalDataset::censoring_fraction() const {
  return 1.0 - static_cast<double>(event_count()) / n();
}

int SurvivalDataset::covariate_index(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DataError("unknown covariate '" + name + "'");
  return static_cast<int>(it - names_.begin());
}

std::vector<int> SurvivalDataset::binary_columns() const {
  std::vector<int> out;
  for (int q = 0; q < p(); ++q) {
    std::set<double> values;
    for (int i = 0; i < n() && values.size() <= 2; ++i) values.insert(covariates_(i, q));
    if (values.size() == 2) out.push_back(q);
  }
  return out;
}

SurvivalDataset SurvivalDataset::with_covariates(Eigen::MatrixXd covariates,
                                                 std::vector<std::string> names) const {
  if (names.empty() && covariates.cols() == covariates_.cols()) names = names_;
  return {time_, status_, std::move(covariates), std::move(names)};
}

SurvivalDataset SurvivalDataset::rescaled_time(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw DataError("time scale factor must be positive");
  std::vector<double> t(time_);
  for (auto& v : t) v *= factor;
  return {std::move(t), status_, covariates_, names_};
}

SurvivalDataset SurvivalDataset::permuted(const std::vector<int>& perm) const {
  if (static_cast<int>(perm.size()) != n()) throw DataError("permutation has wrong length");
  std::vector<double> t(n());
  std::vector<int> s(n());
  Eigen::MatrixXd z(n(), p());
  for (int i = 0; i < n(); ++i) {
    t[i] = time_[perm[i]];
    s[i] = status_[perm[i]];
    z.row(i) = covariates_.row(perm[i]);
  }
  return {std::move(t), std::move(s), std::move(z), names_};
}

nlohmann::json SurvivalDataset::summary_json() const {
  nlohmann::json binary = nlohmann::json::array();
  for (int q : binary_columns()) binary.push_back(names_[q]);
  return {{"n", n()},
          {"p", p()},
          {"events", event_count()},
          {"censoring_fraction", censoring_fraction()},
          {"covariates", names_},
          {"binary_covariates", binary}};
}

SurvivalDataset load_csv(const std::filesystem::path& path, const std::string& time_col,
                         const std::string& status_col,
                         const std::vector<std::string>& covariate_cols) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_row(line);

  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto time_idx = column(time_col);
  const auto status_idx = column(status_col);
  std::vector<std::size_t> cov_idx;
  for (const auto& c : covariate_cols) cov_idx.push_back(column(c));
  if (cov_idx.empty()) throw DataError("no covariate columns requested");

  std::vector<double> time;
  std::vector<int> status;
  std::vector<std::vector<double>> rows;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    }
    auto number = [&](std::size_t idx) {
      double v = 0.0;
      if (!parse_double(cells[idx], v)) {
        throw DataError("row " + std::to_string(row) + ": non-numeric value '" + cells[idx] +
                        "' in column '" + header[idx] + "'");
      }
      return v;
    };
    const double t = number(time_idx);
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw DataError("row " + std::to_string(row) + ": time must be positive and finite");
    }
    const double s = number(status_idx);
    if (s != 0.0 && s != 1.0) {
      throw DataError("row " + std::to_string(row) + ": status must be 0 or 1");
    }
    time.push_back(t);
    status.push_back(static_cast<int>(s));
    std::vector<double> z;
    for (auto idx : cov_idx) z.push_back(number(idx));
    rows.push_back(std::move(z));
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");

  Eigen::MatrixXd cov(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cov_idx.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t q = 0; q < cov_idx.size(); ++q) cov(i, q) = rows[i][q];
  }
  return {std::move(time), std::move(status), std::move(cov), covariate_cols};
}

void save_csv(const SurvivalDataset& data, const std::filesystem::path& path,
              const std::string& time_col, const std::string& status_col) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << time_col << ',' << status_col;
  for (const auto& name : data.names()) out << ',' << name;
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    out << format_double(data.time()[i]) << ',' << data.status()[i];
    for (int q = 0; q < data.p(); ++q) out << ',' << format_double(data.covariates()(i, q));
    out << '\n';
  }
}

Eigen::MatrixXd StandardizationRecord::apply(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd out = raw;
  for (Eigen::Index q = 0; q < out.cols(); ++q) {
    out.col(q) = (out.col(q).array() - mean(q)) / sd(q);
  }
  return out;
}

Eigen::MatrixXd StandardizationRecord::invert(const Eigen::MatrixXd& standardized) const {
  Eigen::MatrixXd out = standardized;
  for (Eigen::Index q = 0; q < out.cols(); ++q) {
    out.col(q) = out.col(q).array() * sd(q) + mean(q);
  }
  return out;
}

Eigen::VectorXd StandardizationRecord::coefficients_to_raw(const Eigen::VectorXd& beta_std) const {
  return beta_std.array() / sd.array();
}

std::pair<SurvivalDataset, StandardizationRecord> standardize(const SurvivalDataset& data,
                                                              StandardizeOptions options) {
  const int n = data.n();
  const int p = data.p();
  StandardizationRecord rec;
  rec.mean = Eigen::VectorXd::Zero(p);
  rec.sd = Eigen::VectorXd::Ones(p);
  rec.exempt.assign(p, false);
  if (options.exempt_binary) {
    for (int q : data.binary_columns()) rec.exempt[q] = true;
  }
  const auto& z = data.covariates();
  for (int q = 0; q < p; ++q) {
    const double m = z.col(q).mean();
    const double ss = (z.col(q).array() - m).square().sum();
    const double sd = std::sqrt(ss / (n - 1));
    if (!(sd > 0.0)) throw DataError("covariate '" + data.names()[q] + "' has zero variance");
    if (rec.exempt[q]) continue;
    rec.mean(q) = m;
    rec.sd(q) = sd;
  }
  return {data.with_covariates(rec.apply(z)), rec};
}

}  // namespace aftgof
