#include "calcheck/records.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"

#include "calcheck/error.hpp"

namespace calcheck {

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

constexpr double kWeightSumTolerance = 1e-6;

class LineParser {
 public:
  LineParser(const Json& object, std::size_t line) : obj_(object), line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw DataError("field '" + field + "': " + what, line_);
  }

  const Json& field(const std::string& name) const {
    const auto it = obj_.find(name);
    if (it == obj_.end()) {
      fail(name, "missing");
    }
    return *it;
  }

  double number(const Json& value, const std::string& name) const {
    if (!value.is_number()) {
      fail(name, "expected a number");
    }
    const double x = value.get<double>();
    if (!std::isfinite(x)) {
      fail(name, "not finite");
    }
    return x;
  }

  double number(const std::string& name) const { return number(field(name), name); }

  std::vector<double> numbers(const Json& value, const std::string& name) const {
    if (!value.is_array()) {
      fail(name, "expected an array of numbers");
    }
    std::vector<double> out;
    out.reserve(value.size());
    for (const auto& v : value) {
      out.push_back(number(v, name));
    }
    return out;
  }

  std::vector<double> numbers(const std::string& name) const {
    return numbers(field(name), name);
  }

  Eigen::VectorXd vector(const std::string& name) const {
    const auto v = numbers(name);
    if (v.empty()) {
      fail(name, "must not be empty");
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  // Row-major nested array with rows of equal length.
  Eigen::MatrixXd matrix(const std::string& name) const {
    const Json& rows = field(name);
    if (!rows.is_array() || rows.empty()) {
      fail(name, "expected a non-empty array of rows");
    }
    Eigen::MatrixXd m;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto row = numbers(rows[i], name);
      if (i == 0) {
        if (row.empty()) {
          fail(name, "rows must not be empty");
        }
        m.resize(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(row.size()));
      } else if (static_cast<Eigen::Index>(row.size()) != m.cols()) {
        fail(name, "rows differ in length");
      }
      for (std::size_t j = 0; j < row.size(); ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
      }
    }
    return m;
  }

  std::optional<std::int64_t> time_index() const {
    const auto it = obj_.find("t");
    if (it == obj_.end()) {
      return std::nullopt;
    }
    if (!it->is_number_integer()) {
      fail("t", "expected an integer");
    }
    return it->get<std::int64_t>();
  }

 private:
  const Json& obj_;
  std::size_t line_;
};

PredictiveDistribution parse_parametric(const LineParser& p) {
  const Json& family = p.field("family");
  if (!family.is_string()) {
    p.fail("family", "expected a string");
  }
  const auto name = family.get<std::string>();
  const auto params = p.numbers("params");
  auto arity = [&](std::size_t n) {
    if (params.size() != n) {
      p.fail("params", "family '" + name + "' takes " + std::to_string(n) +
                           " parameters");
    }
  };
  if (name == "normal") {
    arity(2);
    return ParametricPrediction::normal(params[0], params[1]);
  }
  if (name == "student_t") {
    arity(3);
    return ParametricPrediction::student_t(params[0], params[1], params[2]);
  }
  if (name == "exponential") {
    arity(1);
    return ParametricPrediction::exponential(params[0]);
  }
  if (name == "gamma") {
    arity(2);
    return ParametricPrediction::gamma(params[0], params[1]);
  }
  p.fail("family", "unknown family '" + name + "'");
}

PredictiveDistribution parse_particles(const LineParser& p) {
  auto w = p.numbers("w");
  Eigen::MatrixXd pts = p.matrix("pts");
  if (static_cast<Eigen::Index>(w.size()) != pts.rows()) {
    p.fail("w", "expected one weight per row of 'pts'");
  }
  double total = 0.0;
  for (double wi : w) {
    if (wi < 0.0) {
      p.fail("w", "weights must be nonnegative");
    }
    total += wi;
  }
  if (std::abs(total - 1.0) > kWeightSumTolerance) {
    p.fail("w", "weights sum to " + std::to_string(total) + ", not 1");
  }
  return ParticleCloudPrediction(std::move(w), std::move(pts));
}

PredictiveDistribution parse_set_provider(const LineParser& p) {
  const auto levels = p.numbers("levels");
  const auto lo = p.numbers("lo");
  const auto hi = p.numbers("hi");
  if (lo.size() != levels.size() || hi.size() != levels.size()) {
    p.fail("levels", "'levels', 'lo' and 'hi' must have equal length");
  }
  std::vector<LevelSet> table;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    table.push_back({levels[i], {lo[i], hi[i]}});
  }
  return PredictionSetProvider::from_table(std::move(table));
}

Eigen::VectorXd parse_outcome(const LineParser& p, bool scalar) {
  if (scalar) {
    return Eigen::VectorXd::Constant(1, p.number("y"));
  }
  return p.vector("y");
}

OrderedJson vector_json(const Eigen::VectorXd& v) {
  OrderedJson a = OrderedJson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    a.push_back(v[i]);
  }
  return a;
}

OrderedJson matrix_json(const Eigen::MatrixXd& m) {
  OrderedJson rows = OrderedJson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(vector_json(m.row(i).transpose()));
  }
  return rows;
}

}  // namespace

PredictionRecord parse_record(std::string_view line, ModelKind kind,
                              std::size_t line_no) {
  Json obj;
  try {
    obj = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what(), line_no);
  }
  if (!obj.is_object()) {
    throw DataError("expected a JSON object", line_no);
  }
  const LineParser p(obj, line_no);
  try {
    switch (kind) {
      case ModelKind::gaussian:
        return {GaussianPrediction(p.number("mu"), p.number("sigma")),
                parse_outcome(p, true), p.time_index()};
      case ModelKind::mv_gaussian:
        return {MvGaussianPrediction(p.vector("mu"), p.matrix("cov")),
                parse_outcome(p, false), p.time_index()};
      case ModelKind::parametric:
        return {parse_parametric(p), parse_outcome(p, true), p.time_index()};
      case ModelKind::particles:
        return {parse_particles(p), parse_outcome(p, false), p.time_index()};
      case ModelKind::set_provider:
        return {parse_set_provider(p), parse_outcome(p, true), p.time_index()};
    }
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(e.what(), line_no);
  }
  throw DataError("unknown model kind", line_no);
}

std::string format_record(const PredictionRecord& record) {
  OrderedJson j;
  const auto& pred = record.prediction();
  const bool scalar_outcome = model_kind(pred) == ModelKind::gaussian ||
                              model_kind(pred) == ModelKind::parametric ||
                              model_kind(pred) == ModelKind::set_provider;
  if (const auto* g = std::get_if<GaussianPrediction>(&pred)) {
    j["mu"] = g->mu();
    j["sigma"] = g->sigma();
  } else if (const auto* m = std::get_if<MvGaussianPrediction>(&pred)) {
    j["mu"] = vector_json(m->mu());
    j["cov"] = matrix_json(m->cov());
  } else if (const auto* q = std::get_if<ParametricPrediction>(&pred)) {
    if (q->family() == ParametricFamily::custom) {
      throw InvalidArgument("custom parametric predictions cannot be serialized");
    }
    j["family"] = std::string(to_string(q->family()));
    j["params"] = q->params();
  } else if (const auto* c = std::get_if<ParticleCloudPrediction>(&pred)) {
    j["w"] = c->weights();
    j["pts"] = matrix_json(c->points());
  } else {
    const auto& s = std::get<PredictionSetProvider>(pred);
    if (s.table().empty()) {
      throw InvalidArgument("callable prediction sets cannot be serialized");
    }
    OrderedJson levels = OrderedJson::array();
    OrderedJson lo = OrderedJson::array();
    OrderedJson hi = OrderedJson::array();
    for (const auto& e : s.table()) {
      levels.push_back(e.level);
      lo.push_back(e.interval.lo);
      hi.push_back(e.interval.hi);
    }
    j["levels"] = levels;
    j["lo"] = lo;
    j["hi"] = hi;
  }
  if (scalar_outcome) {
    j["y"] = record.outcome()[0];
  } else {
    j["y"] = vector_json(record.outcome());
  }
  if (record.time_index()) {
    j["t"] = *record.time_index();
  }
  return j.dump();
}

RecordReader::RecordReader(std::istream& in, ModelKind kind) : in_(in), kind_(kind) {}

std::optional<PredictionRecord> RecordReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (observer_) {
      observer_(text);
    }
    if (text.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    PredictionRecord record = parse_record(text, kind_, line_);
    const Eigen::Index d = record.outcome().size();
    if (dim_ && *dim_ != d) {
      throw DataError("dimension " + std::to_string(d) + " differs from " +
                          std::to_string(*dim_) + " on earlier lines",
                      line_);
    }
    dim_ = d;
    return record;
  }
  if (in_.bad()) {
    throw DataError("read error", line_ + 1);
  }
  return std::nullopt;
}

std::vector<PredictionRecord> parse_records(std::istream& in, ModelKind kind) {
  RecordReader reader(in, kind);
  std::vector<PredictionRecord> records;
  while (auto r = reader.next()) {
    records.push_back(std::move(*r));
  }
  if (records.empty()) {
    throw DataError("no records in input");
  }
  return records;
}

std::vector<PredictionRecord> parse_records(const std::filesystem::path& path,
                                            ModelKind kind) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  return parse_records(in, kind);
}

void write_records(std::ostream& out, std::span<const PredictionRecord> records) {
  for (const auto& r : records) {
    out << format_record(r) << '\n';
  }
}

}  // namespace calcheck
