#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace taxclass {

using json = nlohmann::json;

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// Writes to a temp sibling and renames into place, so readers never observe
// a partially written file.
void write_file_atomic(const std::string& path, std::string_view content);

void append_line(const std::string& path, std::string_view line);

std::vector<json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<json>& records);

void ensure_dir(const std::string& path);
bool path_exists(const std::string& path);

// UTC wall-clock stamps. The compact form names run directories; the ISO form
// goes into manifests.
std::string utc_stamp_compact();
std::string utc_stamp_iso();

// Creates `<base>/<name>-<stamp>` (with a numeric suffix when the stamp
// collides) so no command ever overwrites a prior run.
std::string make_run_dir(const std::string& base, const std::string& name);

}  // namespace taxclass
