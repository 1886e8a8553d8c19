#include "fsutil.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "fcomm/error.hpp"

namespace fcomm::detail {

namespace {

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }

 private:
  int fd_;
};

void write_all(int fd, std::span<const std::byte> data, const std::filesystem::path& path) {
  const std::byte* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_io("write " + path.string(), errno);
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

}  // namespace

void throw_io(const std::string& what, int err) {
  throw Error(ErrorCode::IoError, what + ": " + std::strerror(err));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> head,
                       std::span<const std::byte> body) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  Fd fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
  if (fd.get() < 0) throw_io("open " + tmp.string(), errno);
  try {
    write_all(fd.get(), head, tmp);
    write_all(fd.get(), body, tmp);
  } catch (...) {
    remove_quietly(tmp);
    throw;
  }
  if (::close(fd.release()) != 0) {
    const int err = errno;
    remove_quietly(tmp);
    throw_io("close " + tmp.string(), err);
  }
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    const int err = errno;
    remove_quietly(tmp);
    throw_io("rename " + tmp.string(), err);
  }
}

void create_lock(const std::filesystem::path& path) {
  Fd fd(::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644));
  if (fd.get() < 0) {
    if (errno == EEXIST) throw Error(ErrorCode::StaleMessage, "unconsumed lock " + path.string());
    throw_io("create " + path.string(), errno);
  }
}

Bytes read_file(const std::filesystem::path& path) {
  Fd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (fd.get() < 0) throw_io("open " + path.string(), errno);
  struct stat st {};
  if (::fstat(fd.get(), &st) != 0) throw_io("stat " + path.string(), errno);
  Bytes out(static_cast<std::size_t>(st.st_size));
  std::size_t got = 0;
  while (got < out.size()) {
    const ssize_t n = ::read(fd.get(), out.data() + got, out.size() - got);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_io("read " + path.string(), errno);
    }
    if (n == 0) break;
    got += static_cast<std::size_t>(n);
  }
  out.resize(got);
  return out;
}

void remove_quietly(const std::filesystem::path& path) noexcept {
  std::error_code ec;
  std::filesystem::remove(path, ec);
}

}  // namespace fcomm::detail
