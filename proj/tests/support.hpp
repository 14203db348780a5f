#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>

#include "promptopt/gateway.hpp"
#include "promptopt/mock_backend.hpp"

namespace test_support {

inline std::filesystem::path data_dir() {
  return std::filesystem::path(PROMPTOPT_TEST_DATA_DIR);
}

inline std::filesystem::path templates_dir() {
  return std::filesystem::path(PROMPTOPT_TEMPLATES_DIR);
}

// Unique scratch directory, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    for (int tries = 0; tries < 64; ++tries) {
      auto candidate = base / ("promptopt-test-" + std::to_string(rd()));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("could not create scratch directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// One backend serving every role.
inline promptopt::Gateway make_gateway(std::shared_ptr<promptopt::Backend> backend,
                                       promptopt::GatewayOptions options = {}) {
  using promptopt::Role;
  std::map<Role, std::shared_ptr<promptopt::Backend>> backends{
      {Role::optimizer, backend}, {Role::evaluator, backend}, {Role::judge, backend}};
  return promptopt::Gateway(std::move(backends), std::move(options));
}

}  // namespace test_support
