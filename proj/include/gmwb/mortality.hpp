#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace gmwb {

/// Raised for malformed life tables; the message carries the file and line.
class MortalityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Period life table: one-year death probability q by integer age.
class MortalityTable {
 public:
  MortalityTable() = default;
  explicit MortalityTable(std::map<int, double> q);

  /// Reads "age,qx" rows. A header row and '#' comment lines are allowed.
  static MortalityTable load(const std::filesystem::path& path);
  static MortalityTable parse(const std::string& text, const std::string& source = "<memory>");
  /// q = 0 at every age in [first, last].
  static MortalityTable immortal(int first, int last);

  double q(int age) const;
  double p(int age) const { return 1.0 - q(age); }
  bool has(int age) const { return q_.count(age) != 0; }
  /// Throws unless every age in [first, last] is present.
  void require_ages(int first, int last) const;

  const std::map<int, double>& rates() const { return q_; }

 private:
  std::map<int, double> q_;
};

}  // namespace gmwb
