#include "nhtl/csv.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace nhtl {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& comments,
                     const std::vector<std::string>& columns) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  out_.open(path, std::ios::binary);  // binary: keep LF endings everywhere
  if (!out_) throw std::runtime_error("cannot open output file: " + path.string());
  for (const auto& c : comments) out_ << "# " << c << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << ",";
    out_ << columns[i];
  }
  out_ << "\n";
}

CsvWriter::~CsvWriter() = default;

CsvWriter::Row& CsvWriter::Row::operator<<(double x) {
  if (!first_) writer_->out_ << ",";
  first_ = false;
  writer_->out_ << format_double(x);
  return *this;
}

CsvWriter::Row& CsvWriter::Row::operator<<(int x) {
  if (!first_) writer_->out_ << ",";
  first_ = false;
  writer_->out_ << x;
  return *this;
}

CsvWriter::Row& CsvWriter::Row::operator<<(std::int64_t x) {
  if (!first_) writer_->out_ << ",";
  first_ = false;
  writer_->out_ << x;
  return *this;
}

CsvWriter::Row& CsvWriter::Row::operator<<(const std::string& s) {
  if (!first_) writer_->out_ << ",";
  first_ = false;
  writer_->out_ << s;
  return *this;
}

CsvWriter::Row::~Row() { writer_->out_ << "\n"; }

void write_state_csv(const std::filesystem::path& path, const ComplexVector& state,
                     const std::vector<std::string>& comments) {
  CsvWriter csv(path, comments, {"site", "re_psi", "im_psi"});
  for (Eigen::Index i = 0; i < state.size(); ++i)
    csv.row() << static_cast<int>(i + 1) << state[i].real() << state[i].imag();
}

ComplexVector read_state_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open state file: " + path.string());
  std::vector<Complex> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("site", 0) == 0) continue;
    std::istringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // site index, ignored
    double re = 0, im = 0;
    std::getline(ss, cell, ',');
    re = std::stod(cell);
    if (std::getline(ss, cell, ',')) im = std::stod(cell);
    values.emplace_back(re, im);
  }
  ComplexVector state(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) state[static_cast<Eigen::Index>(i)] = values[i];
  return state;
}

void write_matrix_csv(const std::filesystem::path& path, const ComplexMatrix& m) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path.string());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ",";
      out << '"' << format_double(m(i, j).real()) << ',' << format_double(m(i, j).imag()) << '"';
    }
    out << "\n";
  }
}

}  // namespace nhtl
