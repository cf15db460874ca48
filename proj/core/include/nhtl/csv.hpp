#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nhtl/lattice.hpp"

namespace nhtl {

/// Shortest round-trippable decimal form ("%.17g").
std::string format_double(double x);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t x);

/// Writes one CSV file: optional '#' comment lines, then a header row, then
/// data rows. Numeric formatting is deterministic so identical inputs yield
/// byte-identical files.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& comments,
            const std::vector<std::string>& columns);
  ~CsvWriter();

  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  class Row {
   public:
    explicit Row(CsvWriter* w) : writer_(w) {}
    Row& operator<<(double x);
    Row& operator<<(int x);
    Row& operator<<(std::int64_t x);
    Row& operator<<(const std::string& s);
    ~Row();

   private:
    CsvWriter* writer_;
    bool first_ = true;
  };

  Row row() { return Row(this); }

 private:
  friend class Row;
  std::ofstream out_;
};

/// State file: one row per site, columns (site, re_psi, im_psi). Sites 1-based.
void write_state_csv(const std::filesystem::path& path, const ComplexVector& state,
                     const std::vector<std::string>& comments = {});
ComplexVector read_state_csv(const std::filesystem::path& path);

/// Dense matrix dump for debugging: row-major, each cell quoted as "re,im".
void write_matrix_csv(const std::filesystem::path& path, const ComplexMatrix& m);

}  // namespace nhtl
