#include "gmwb/mortality.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace gmwb {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

MortalityTable::MortalityTable(std::map<int, double> q) : q_(std::move(q)) {
  for (const auto& [age, v] : q_)
    if (!(v >= 0 && v <= 1))
      throw MortalityError("mortality: q(" + std::to_string(age) + ") outside [0,1]");
}

MortalityTable MortalityTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MortalityError("mortality: cannot open file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

MortalityTable MortalityTable::parse(const std::string& text, const std::string& source) {
  std::map<int, double> q;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool seen_data = false;
  auto fail = [&](const std::string& what) {
    throw MortalityError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail("expected 'age,qx'");
    const std::string a = trim(std::string_view(line).substr(0, comma));
    const std::string v = trim(std::string_view(line).substr(comma + 1));
    int age = 0;
    double qx = 0;
    if (!parse_number(a, age)) {
      if (!seen_data && !a.empty() && std::isalpha(static_cast<unsigned char>(a[0])))
        continue;  // header row
      fail("malformed age '" + a + "'");
    }
    if (!parse_number(v, qx)) fail("malformed qx '" + v + "'");
    if (!(qx >= 0 && qx <= 1)) fail("qx " + v + " outside [0,1]");
    if (!q.emplace(age, qx).second) fail("duplicate age " + a);
    seen_data = true;
  }
  return MortalityTable(std::move(q));
}

MortalityTable MortalityTable::immortal(int first, int last) {
  std::map<int, double> q;
  for (int a = first; a <= last; ++a) q[a] = 0.0;
  return MortalityTable(std::move(q));
}

double MortalityTable::q(int age) const {
  const auto it = q_.find(age);
  if (it == q_.end()) throw MortalityError("mortality: no rate for age " + std::to_string(age));
  return it->second;
}

void MortalityTable::require_ages(int first, int last) const {
  for (int a = first; a <= last; ++a)
    if (!has(a)) throw MortalityError("mortality: table is missing age " + std::to_string(a));
}

}  // namespace gmwb
