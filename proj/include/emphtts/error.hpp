#pragma once

#include <stdexcept>
#include <string>

namespace emphtts {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input shapes or lengths disagree (label count vs word count, span vs word count...).
class StructuralError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

// A corpus or annotation file violates its schema. The message always carries
// the conversation id, turn index and field name when they are known.
class SchemaError : public Error {
public:
    SchemaError(const std::string& conversation_id, int turn_index, const std::string& field,
                const std::string& detail)
        : Error("schema error in conversation '" + conversation_id + "' turn " +
                std::to_string(turn_index) + " field '" + field + "': " + detail),
          conversation_id_(conversation_id), turn_index_(turn_index), field_(field) {}

    const std::string& conversation_id() const { return conversation_id_; }
    int turn_index() const { return turn_index_; }
    const std::string& field() const { return field_; }

private:
    std::string conversation_id_;
    int turn_index_;
    std::string field_;
};

class OrderingError : public Error {
public:
    using Error::Error;
};

// Resubmission of an already recorded turn with different labels.
class ConflictError : public Error {
public:
    using Error::Error;
};

class AuthError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace emphtts
