#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "kt/cli.hpp"
#include "kt/encoder.hpp"
#include "kt/synthetic.hpp"
#include "kt/tokenizer.hpp"

namespace kt::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "kt") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int code = 0;
    std::string out, err;
};

inline CliResult run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

inline tok::Vocab synthetic_vocab() { return tok::Vocab(corpus::synthetic_vocab()); }

// L=2, H=8, A=2, F=16 over the synthetic vocabulary.
inline enc::ModelConfig toy_cfg() { return enc::toy_config(corpus::synthetic_vocab().size()); }

inline corpus::LabelledDataset toy_data(std::size_t n, std::uint64_t seed = 3,
                                        corpus::SyntheticDomain domain = corpus::SyntheticDomain::narrative) {
    corpus::SyntheticSpec spec;
    spec.records = n;
    spec.positive_fraction = 0.5;
    spec.domain = domain;
    spec.seed = seed;
    spec.id_prefix = "t";
    return corpus::make_synthetic(spec);
}

}  // namespace kt::test
