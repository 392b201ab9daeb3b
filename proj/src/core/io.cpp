#include "core/io.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"

namespace fs = std::filesystem;

namespace taxclass {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::IoError, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) raise(ErrorKind::IoError, "write failed for " + path);
}

void write_file_atomic(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  write_file(tmp, content);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    raise(ErrorKind::IoError, "rename failed for " + path);
  }
}

void append_line(const std::string& path, std::string_view line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) raise(ErrorKind::IoError, "cannot append to " + path);
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.put('\n');
  if (!out) raise(ErrorKind::IoError, "append failed for " + path);
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot open " + path);
  std::vector<json> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      raise(ErrorKind::Unparseable, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_jsonl(const std::string& path, const std::vector<json>& records) {
  std::string out;
  for (const json& record : records) {
    out += record.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) raise(ErrorKind::IoError, "cannot create directory " + path);
}

bool path_exists(const std::string& path) { return fs::exists(path); }

namespace {

std::tm utc_now_tm() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return tm;
}

}  // namespace

std::string utc_stamp_compact() {
  const std::tm tm = utc_now_tm();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02dT%02d%02d%02dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

std::string utc_stamp_iso() {
  const std::tm tm = utc_now_tm();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

std::string make_run_dir(const std::string& base, const std::string& name) {
  ensure_dir(base);
  const std::string stem = base + "/" + name + "-" + utc_stamp_compact();
  std::string candidate = stem;
  int suffix = 1;
  while (fs::exists(candidate)) {
    candidate = stem + "-" + std::to_string(++suffix);
  }
  ensure_dir(candidate);
  return candidate;
}

}  // namespace taxclass
