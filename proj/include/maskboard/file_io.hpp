#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "maskboard/error.hpp"

namespace maskboard {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw not_found("cannot read " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

namespace detail {

inline void write_all(int fd, std::string_view bytes, const fs::path& path) {
  std::size_t written = 0;
  while (written < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      throw std::runtime_error("write failed for " + path.string() + ": " +
                               std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

inline void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace detail

/// Writes to a sibling temp file, fsyncs, then renames over the target. A reader
/// sees either the old file or the complete new one.
inline void atomic_write_file(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.parent_path() /
                       (".tmp." + path.filename().string() + "." + std::to_string(::getpid()));
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) {
    throw std::runtime_error("cannot create " + tmp.string() + ": " + std::strerror(errno));
  }
  try {
    detail::write_all(fd, bytes, tmp);
    if (::fsync(fd) != 0) {
      throw std::runtime_error("fsync failed for " + tmp.string());
    }
  } catch (...) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    const std::string reason = std::strerror(errno);
    ::unlink(tmp.c_str());
    throw std::runtime_error("rename to " + path.string() + " failed: " + reason);
  }
  detail::fsync_dir(path.parent_path());
}

/// Appends one newline-terminated record and fsyncs. A torn write leaves an
/// unterminated tail which readers discard.
inline void append_line(const fs::path& path, std::string_view line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) {
    throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
  }
  std::string record(line);
  record.push_back('\n');
  try {
    detail::write_all(fd, record, path);
    ::fsync(fd);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

/// Splits newline-delimited text. The final segment is dropped when it is not
/// newline-terminated and `complete_only` is set.
inline std::vector<std::string_view> split_lines(std::string_view text,
                                                 bool complete_only = false) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (!complete_only) {
        lines.push_back(text.substr(start));
      }
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

}  // namespace maskboard
