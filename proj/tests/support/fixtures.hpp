#pragma once

#include <atomic>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "valign/dataset.hpp"
#include "valign/mock.hpp"
#include "valign/registry.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(VALIGN_SOURCE_DIR); }

inline const valign::Registry& sexism_registry() {
  static const valign::Registry reg = valign::load_registry(source_dir() / "values" / "sexism.json");
  return reg;
}

// Removes itself on destruction unless VALIGN_KEEP_TMP is set.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("valign_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    if (!std::getenv("VALIGN_KEEP_TMP")) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

// A loopback port with nothing listening on it (bound, read back, closed).
inline int unused_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof addr;
  if (fd < 0 || ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    throw std::runtime_error("cannot reserve a loopback port");
  }
  ::close(fd);
  return ntohs(addr.sin_port);
}

inline valign::Registry toy_registry(std::size_t n) {
  std::vector<valign::ValueCategory> cats;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = std::to_string(i);
    cats.push_back({"cat" + s, "Category " + s, "Value text number " + s + " endorses topic" + s,
                    "Counter text number " + s + " rejects topic" + s});
  }
  return valign::Registry(std::move(cats));
}

// Linearly separable triplets: a content either carries the off-topic
// keyword (label na) or is paired with its category's value ("endorse",
// sexist) and counter-value ("oppose", non_sexist). Filler words are noise.
inline std::vector<valign::Triplet> separable_triplets(std::size_t per_label, std::uint64_t seed) {
  using valign::Label;
  using valign::Stance;
  static const std::vector<std::string> filler = {"red", "green", "blue", "stone", "river", "cloud", "plain",
                                                 "light", "north", "quiet", "sharp", "round", "early", "late"};
  valign::Rng rng(seed);
  auto content = [&](std::size_t i, bool off_topic) {
    std::vector<std::string> words;
    for (int w = 0; w < 6; ++w) words.push_back(rng.pick(filler));
    words.push_back("topic" + std::to_string(i % 4));
    if (off_topic) words.push_back("offtopic");
    rng.shuffle(words);
    std::string out;
    for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
    return out + " item" + std::to_string(i) + (off_topic ? "x" : "");
  };
  auto value = [](const std::string& cat, Stance s) {
    return "the value of " + cat + (s == Stance::value ? " endorse" : " oppose");
  };
  std::vector<valign::Triplet> out;
  for (std::size_t i = 0; i < per_label; ++i) {
    const std::string cat = "cat" + std::to_string(i % 4);
    const std::string c = content(i, false);
    out.push_back({c, value(cat, Stance::value), Label::sexist, cat, cat, Stance::value, valign::Origin::generated});
    out.push_back({c, value(cat, Stance::counter_value), Label::non_sexist, cat, cat, Stance::counter_value,
                   valign::Origin::generated});
    const std::string other = "cat" + std::to_string((i + 1) % 4);
    const Stance s = rng.bernoulli(0.5) ? Stance::value : Stance::counter_value;
    out.push_back({content(i, true), value(other, s), Label::na, other, cat, s, valign::Origin::synthetic_na});
  }
  return out;
}

}  // namespace fixtures
