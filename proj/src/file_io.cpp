#include "score/file_io.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "score/error.hpp"

namespace score {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    static std::atomic<unsigned> counter{0};
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);

    auto tmp = path;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) +
           "." + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("rename to " + path.string() + " failed: " + ec.message());
    }
}

bool write_if_changed(const fs::path& path, std::string_view content) {
    std::error_code ec;
    if (fs::is_regular_file(path, ec) && fs::file_size(path, ec) == content.size()) {
        if (read_file(path) == content) return false;
    }
    write_file_atomic(path, content);
    return true;
}

}  // namespace score
