#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "score/llm_gateway.hpp"
#include "score/story.hpp"

namespace score::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "score-test-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(SCORE_FIXTURE_DIR) / name;
}

inline GatewayConfig mock_config(CacheMode mode = CacheMode::off, std::filesystem::path cache_dir = "cache") {
    GatewayConfig c;
    c.backend = BackendKind::mock;
    c.cache_mode = mode;
    c.cache_dir = std::move(cache_dir);
    return c;
}

inline Story make_story(std::string id, std::vector<std::string> texts, std::vector<KeyItem> items = {}) {
    Story s;
    s.story_id = std::move(id);
    s.title = "Test story";
    s.genre = Genre::fantasy;
    s.key_items = std::move(items);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        s.episodes.push_back(make_episode(static_cast<EpisodeIndex>(i), std::move(texts[i])));
    }
    return s;
}

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = normal(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

}  // namespace score::testing
