#include "score/prompts.hpp"

#include <set>

#include "score/embedded.hpp"
#include "score/error.hpp"
#include "score/file_io.hpp"

namespace score {

namespace fs = std::filesystem;

PromptLibrary PromptLibrary::builtin() {
    PromptLibrary lib;
    for (const auto& f : embedded::prompts()) lib.templates_.emplace(std::string(f.name), std::string(f.content));
    return lib;
}

PromptLibrary PromptLibrary::load(const fs::path& dir) {
    auto lib = builtin();
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return lib;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            lib.templates_[entry.path().stem().string()] = read_file(entry.path());
        }
    }
    return lib;
}

void PromptLibrary::write_missing(const fs::path& dir) const {
    for (const auto& [name, text] : templates_) {
        const auto path = dir / (name + ".txt");
        if (!fs::exists(path)) write_file_atomic(path, text);
    }
}

bool PromptLibrary::has(std::string_view name) const { return templates_.find(name) != templates_.end(); }

const std::string& PromptLibrary::get(std::string_view name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ContractError("unknown prompt template '" + std::string(name) + "'");
    return it->second;
}

void PromptLibrary::set(std::string name, std::string text) { templates_[std::move(name)] = std::move(text); }

std::string PromptLibrary::render(std::string_view name, const Vars& vars) const {
    const auto& tpl = get(name);
    std::string out;
    out.reserve(tpl.size());
    std::set<std::string, std::less<>> used;

    std::size_t i = 0;
    while (i < tpl.size()) {
        const auto open = tpl.find("{{", i);
        if (open == std::string::npos) {
            out.append(tpl, i);
            break;
        }
        const auto close = tpl.find("}}", open + 2);
        if (close == std::string::npos) {
            throw ContractError("prompt '" + std::string(name) + "': unterminated placeholder");
        }
        out.append(tpl, i, open - i);
        const std::string_view key(tpl.data() + open + 2, close - open - 2);
        auto it = vars.find(key);
        if (it == vars.end()) {
            throw ContractError("prompt '" + std::string(name) + "': unbound placeholder {{" + std::string(key) + "}}");
        }
        out += it->second;
        used.emplace(key);
        i = close + 2;
    }
    for (const auto& [key, _] : vars) {
        if (!used.count(key)) throw ContractError("prompt '" + std::string(name) + "' has no placeholder {{" + key + "}}");
    }
    return out;
}

std::optional<PromptEnvelope> parse_envelope(std::string_view prompt) {
    static constexpr std::string_view kTask = "### task: ";
    static constexpr std::string_view kOpen = "<<<INPUT\n";
    static constexpr std::string_view kClose = "\nINPUT>>>";

    const auto t = prompt.find(kTask);
    if (t == std::string_view::npos) return std::nullopt;
    const auto eol = prompt.find('\n', t);
    if (eol == std::string_view::npos) return std::nullopt;

    const auto open = prompt.find(kOpen, eol);
    const auto close = prompt.rfind(kClose);
    if (open == std::string_view::npos || close == std::string_view::npos || close < open + kOpen.size()) {
        return std::nullopt;
    }
    PromptEnvelope env;
    env.task = std::string(prompt.substr(t + kTask.size(), eol - t - kTask.size()));
    while (!env.task.empty() && (env.task.back() == '\r' || env.task.back() == ' ')) env.task.pop_back();
    const auto begin = open + kOpen.size();
    env.input = std::string(prompt.substr(begin, close - begin));
    return env;
}

}  // namespace score
