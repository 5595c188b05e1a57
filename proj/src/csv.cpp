#include "pstrata/csv.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace pstrata {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

namespace {

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("cannot parse " + what + " value '" + s + "'");
  }
}

int parse_binary(const std::string& s, const std::string& what) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw std::runtime_error(what + " must be 0 or 1, got '" + s + "'");
}

}  // namespace

Dataset read_dataset_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file " + path);
  std::vector<std::string> header = split_csv_line(line);

  auto find = [&header](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  int zi = find("z"), si = find("s"), yi = find("y");
  if (zi < 0 || si < 0 || yi < 0)
    throw std::runtime_error(path + ": header must contain z,s,y");

  std::vector<int> a_idx, c_idx;
  if (!opt.a_cols.empty() || !opt.c_cols.empty()) {
    for (const auto& name : opt.a_cols) {
      int i = find(name);
      if (i < 0) throw std::runtime_error("a-column not found: " + name);
      a_idx.push_back(i);
    }
    for (const auto& name : opt.c_cols) {
      int i = find(name);
      if (i < 0) throw std::runtime_error("c-column not found: " + name);
      c_idx.push_back(i);
    }
    for (int i : a_idx)
      if (std::find(c_idx.begin(), c_idx.end(), i) != c_idx.end())
        throw std::runtime_error("a and c column sets overlap");
  } else {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i].rfind("a_", 0) == 0) a_idx.push_back(static_cast<int>(i));
      if (header[i].rfind("c_", 0) == 0) c_idx.push_back(static_cast<int>(i));
    }
  }
  if (a_idx.empty() && c_idx.empty())
    throw std::runtime_error(path + ": no covariate columns found");

  Dataset d;
  d.a_dim = static_cast<int>(a_idx.size());
  d.c_dim = static_cast<int>(c_idx.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      std::ostringstream os;
      os << path << ":" << lineno << ": expected " << header.size()
         << " fields, got " << f.size();
      throw std::runtime_error(os.str());
    }
    Observation o;
    o.z = parse_binary(f[zi], "z");
    o.s = parse_binary(f[si], "s");
    o.y = parse_double(f[yi], "y");
    for (int i : a_idx) o.a.push_back(parse_double(f[i], header[i]));
    for (int i : c_idx) o.c.push_back(parse_double(f[i], header[i]));
    d.rows.push_back(std::move(o));
  }
  return d;
}

void write_dataset_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "z,s,y";
  for (int j = 0; j < d.a_dim; ++j) out << ",a_" << (j + 1);
  for (int j = 0; j < d.c_dim; ++j) out << ",c_" << (j + 1);
  out << "\n";
  out.precision(17);
  for (const Observation& o : d.rows) {
    out << o.z << "," << o.s << "," << o.y;
    for (double v : o.a) out << "," << v;
    for (double v : o.c) out << "," << v;
    out << "\n";
  }
}

}  // namespace pstrata
