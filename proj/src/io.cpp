#include "ermica/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ermica {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

bool is_scalar(const nlohmann::json& j) { return !j.is_object() && !j.is_array(); }

void emit(const nlohmann::json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  if (j.is_number_float()) {
    out += format_double(j.get<double>());
  } else if (is_scalar(j)) {
    out += j.dump();
  } else if (j.is_array()) {
    const bool flat = std::all_of(j.begin(), j.end(), is_scalar);
    out += '[';
    bool first = true;
    for (const auto& e : j) {
      if (!first) out += flat ? ", " : ",";
      if (!flat) out += "\n" + pad + "  ";
      emit(e, out, indent + 1);
      first = false;
    }
    if (!flat && !j.empty()) out += "\n" + pad;
    out += ']';
  } else {
    out += '{';
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) out += ',';
      out += "\n" + pad + "  " + nlohmann::json(it.key()).dump() + ": ";
      emit(it.value(), out, indent + 1);
      first = false;
    }
    if (!j.empty()) out += "\n" + pad;
    out += '}';
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const Matrix& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  std::string line;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    line.clear();
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) line += ',';
      line += format_double(m(i, j));
    }
    line += '\n';
    out << line;
  }
}

Matrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        data.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ": bad number '" + cell + "' on row " +
                                 std::to_string(rows + 1));
      }
      ++count;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (rows == 0) cols = count;
    else if (count != cols)
      throw std::runtime_error(path.string() + ": ragged row " + std::to_string(rows + 1));
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& r : j.at("data")) {
    if (r.size() != cols) throw std::runtime_error("matrix_from_json: ragged row");
    for (const auto& v : r) data.push_back(v.get<double>());
  }
  return Matrix(rows, cols, std::move(data));
}

std::string dump_json(const nlohmann::json& j) {
  std::string out;
  emit(j, out, 0);
  out += '\n';
  return out;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  write_text(dump_json(j), path);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace ermica
