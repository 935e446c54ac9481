#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace score {

/// Named prompt templates with `{{placeholder}}` slots. The built-in set comes
/// from prompts/*.txt at build time; a project's prompts/ directory overrides
/// individual templates.
class PromptLibrary {
public:
    using Vars = std::map<std::string, std::string, std::less<>>;

    static PromptLibrary builtin();

    /// Built-in templates, overridden by every `<name>.txt` found in `dir`.
    static PromptLibrary load(const std::filesystem::path& dir);

    /// Writes templates missing from `dir`. Existing files are left alone.
    void write_missing(const std::filesystem::path& dir) const;

    bool has(std::string_view name) const;
    const std::string& get(std::string_view name) const;
    void set(std::string name, std::string text);

    /// Substitutes every placeholder. Throws ContractError for an unknown
    /// template, an unbound placeholder or an unused variable.
    std::string render(std::string_view name, const Vars& vars) const;

    const std::map<std::string, std::string, std::less<>>& templates() const { return templates_; }

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

/// Every template starts with `### task: <name>` and carries its payload
/// between `<<<INPUT` and `INPUT>>>` lines. Backends that simulate a model
/// (the mock) read prompts through this envelope.
struct PromptEnvelope {
    std::string task;
    std::string input;
};

std::optional<PromptEnvelope> parse_envelope(std::string_view prompt);

}  // namespace score
