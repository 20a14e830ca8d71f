#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "frost/halting.hpp"
#include "frost/training.hpp"

namespace frost {

// RFC-4180 CSV: header row, LF line endings, fields quoted when needed.
// Doubles are written with %.12g so identical runs emit identical bytes.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& fields);

  static std::string field(double v);
  static std::string field(int v);
  static std::string field(long v);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json affine_to_json(const AffineMap& m);
AffineMap affine_from_json(const nlohmann::json& j);
nlohmann::json sketch_to_json(const KllSketch& s);
KllSketch sketch_from_json(const nlohmann::json& j);

struct Checkpoint {
  Model model;
  HaltingHead head;
  KllSketch sketch{200, 0};
};

// Versioned JSON document holding every parameter array, the model kind,
// dims, rho, Hurst exponent, the halting head, and the score sketch.
// Values round-trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace frost
