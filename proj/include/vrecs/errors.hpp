#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vrecs {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag used in HTTP error payloads and CLI output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define VRECS_SIMPLE_ERROR(Name)                                               \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(#Name, message) {}   \
    }

// dataset-core
VRECS_SIMPLE_ERROR(EmptyInput);
VRECS_SIMPLE_ERROR(EncodingError);
VRECS_SIMPLE_ERROR(DuplicateColumn);
VRECS_SIMPLE_ERROR(LimitExceeded);
VRECS_SIMPLE_ERROR(SchemaError);

class RaggedRow : public Error {
public:
    RaggedRow(std::size_t line, std::size_t expected, std::size_t got)
        : Error("RaggedRow", "row " + std::to_string(line) + " has " + std::to_string(got) +
                                 " cells, header has " + std::to_string(expected)),
          line_(line) {}

    /// 1-based record number, header excluded.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// vegazero
class SyntaxError : public Error {
public:
    SyntaxError(std::size_t position, std::string expected)
        : Error("SyntaxError",
                "syntax error at offset " + std::to_string(position) + ": expected " + expected),
          position_(position), expected_(std::move(expected)) {}

    std::size_t position() const noexcept { return position_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t position_;
    std::string expected_;
};

VRECS_SIMPLE_ERROR(EvalError);

class CompileError : public Error {
public:
    CompileError(const std::string& message, std::vector<std::string> violations)
        : Error("CompileError", message), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

// prompt-forge
VRECS_SIMPLE_ERROR(InvalidInput);
VRECS_SIMPLE_ERROR(TemplateError);

class IncompleteNarrative : public Error {
public:
    explicit IncompleteNarrative(std::vector<std::string> missing)
        : Error("IncompleteNarrative", "narrative is missing: " + join(missing)),
          missing_(std::move(missing)) {}

    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    static std::string join(const std::vector<std::string>& parts) {
        std::string out;
        for (const auto& p : parts) {
            if (!out.empty()) out += ", ";
            out += p;
        }
        return out;
    }
    std::vector<std::string> missing_;
};

// llm-gateway
VRECS_SIMPLE_ERROR(BackendUnavailable);
VRECS_SIMPLE_ERROR(AuthError);
VRECS_SIMPLE_ERROR(ResponseMalformed);
VRECS_SIMPLE_ERROR(UnmatchedPrompt);

// enrichment / corpus-tools
VRECS_SIMPLE_ERROR(IoError);
VRECS_SIMPLE_ERROR(IndexMalformed);
VRECS_SIMPLE_ERROR(InvalidArgument);

class TeacherParseFailure : public Error {
public:
    TeacherParseFailure(std::string task, std::string raw_text, const std::string& why)
        : Error("TeacherParseFailure", task + ": " + why), task_(std::move(task)),
          raw_text_(std::move(raw_text)) {}

    const std::string& task() const noexcept { return task_; }
    const std::string& raw_text() const noexcept { return raw_text_; }

private:
    std::string task_;
    std::string raw_text_;
};

class InsufficientClass : public Error {
public:
    explicit InsufficientClass(std::string hardness)
        : Error("InsufficientClass", "no samples for hardness class " + hardness),
          hardness_(std::move(hardness)) {}

    const std::string& hardness() const noexcept { return hardness_; }

private:
    std::string hardness_;
};

// response-parser. Both carry the raw completion for audit/display.
class ResponseError : public Error {
public:
    ResponseError(std::string kind, const std::string& message, std::string raw_text)
        : Error(std::move(kind), message), raw_text_(std::move(raw_text)) {}

    const std::string& raw_text() const noexcept { return raw_text_; }

private:
    std::string raw_text_;
};

class MissingSection : public ResponseError {
public:
    MissingSection(std::string section, std::string raw_text)
        : ResponseError("MissingSection", "missing section [" + section + "]", std::move(raw_text)),
          section_(std::move(section)) {}

    const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

class SpecSyntaxError : public ResponseError {
public:
    SpecSyntaxError(const SyntaxError& cause, std::string raw_text)
        : ResponseError("SpecSyntaxError", cause.what(), std::move(raw_text)), cause_(cause) {}

    const SyntaxError& cause() const noexcept { return cause_; }

private:
    SyntaxError cause_;
};

class NoSpecFound : public ResponseError {
public:
    explicit NoSpecFound(std::string raw_text)
        : ResponseError("NoSpecFound", "no VegaZero specification found", std::move(raw_text)) {}
};

// service-cli
VRECS_SIMPLE_ERROR(DatasetNotFound);
VRECS_SIMPLE_ERROR(PoolExhausted);
VRECS_SIMPLE_ERROR(NotAssigned);
VRECS_SIMPLE_ERROR(UnknownBackend);

class RangeError : public Error {
public:
    explicit RangeError(std::string field)
        : Error("RangeError", "field '" + field + "' must be an integer in [1, 5]"),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

#undef VRECS_SIMPLE_ERROR

}  // namespace vrecs
