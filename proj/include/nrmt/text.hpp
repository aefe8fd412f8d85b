#pragma once

#include <string>
#include <vector>

namespace nrmt {

std::vector<std::string> split_ws(const std::string& line);
std::string join_ws(const std::vector<std::string>& tokens);

// Splits a UTF-8 string into code-point sized chunks.
std::vector<std::string> utf8_chars(const std::string& s);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace nrmt
