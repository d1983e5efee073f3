#ifndef CALCHECK_RECORDS_HPP_
#define CALCHECK_RECORDS_HPP_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "calcheck/dist.hpp"

/*
 * Line-delimited JSON records, one prediction/outcome pair per line:
 *
 *   gaussian      {"mu": m, "sigma": s, "y": y}
 *   mv_gaussian   {"mu": [..], "cov": [[..], ..], "y": [..]}
 *   parametric    {"family": "student_t", "params": [dof, loc, scale], "y": y}
 *   particles     {"w": [..], "pts": [[..], ..], "y": [..]}
 *   set_provider  {"levels": [..], "lo": [..], "hi": [..], "y": y}
 *
 * Any record may carry an integer time index "t". Blank lines are skipped.
 * Particle weights summing to 1 within 1e-6 are renormalized.
 */
namespace calcheck {

// Throws DataError citing line_no and the offending field.
PredictionRecord parse_record(std::string_view line, ModelKind kind,
                              std::size_t line_no = 0);

// Throws InvalidArgument for predictions that have no serialized form (custom
// parametric families, callable set providers).
std::string format_record(const PredictionRecord& record);

class RecordReader {
 public:
  RecordReader(std::istream& in, ModelKind kind);

  // Next record, or nullopt at end of input. Enforces a common outcome
  // dimension across lines.
  std::optional<PredictionRecord> next();
  std::size_t line() const { return line_; }

  // Called with every raw line read, before it is parsed.
  void set_line_observer(std::function<void(std::string_view)> observer) {
    observer_ = std::move(observer);
  }

 private:
  std::istream& in_;
  ModelKind kind_;
  std::function<void(std::string_view)> observer_;
  std::size_t line_ = 0;
  std::optional<Eigen::Index> dim_;
};

// Empty input is a DataError.
std::vector<PredictionRecord> parse_records(std::istream& in, ModelKind kind);
std::vector<PredictionRecord> parse_records(const std::filesystem::path& path,
                                            ModelKind kind);

void write_records(std::ostream& out, std::span<const PredictionRecord> records);

}  // namespace calcheck

#endif  // CALCHECK_RECORDS_HPP_
