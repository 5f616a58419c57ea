#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace polydoc::pdf {

struct Ref {
    uint32_t num = 0;
    uint16_t gen = 0;
    friend bool operator==(const Ref&, const Ref&) = default;
};

struct Name {
    std::string value;
    friend bool operator==(const Name&, const Name&) = default;
};

class Object;
using Array = std::vector<Object>;
class Dict;
struct Stream;

/// A parsed PDF value. Containers are held by shared pointer so copies are cheap.
class Object {
public:
    using Storage = std::variant<std::monostate, bool, int64_t, double, Name, std::string,
                                 std::shared_ptr<const Array>, std::shared_ptr<const Dict>,
                                 std::shared_ptr<const Stream>, Ref>;

    Object() = default;
    Object(bool b) : v_(b) {}
    Object(int64_t i) : v_(i) {}
    Object(double d) : v_(d) {}
    Object(Name n) : v_(std::move(n)) {}
    Object(std::string s) : v_(std::move(s)) {}
    Object(Array a);
    Object(Dict d);
    Object(std::shared_ptr<const Stream> s) : v_(std::move(s)) {}
    Object(Ref r) : v_(r) {}

    bool is_null() const { return std::holds_alternative<std::monostate>(v_); }
    bool is_bool() const { return std::holds_alternative<bool>(v_); }
    bool is_int() const { return std::holds_alternative<int64_t>(v_); }
    bool is_number() const { return is_int() || std::holds_alternative<double>(v_); }
    bool is_name() const { return std::holds_alternative<Name>(v_); }
    bool is_name(std::string_view n) const { return is_name() && std::get<Name>(v_).value == n; }
    bool is_string() const { return std::holds_alternative<std::string>(v_); }
    bool is_array() const { return std::holds_alternative<std::shared_ptr<const Array>>(v_); }
    bool is_dict() const { return std::holds_alternative<std::shared_ptr<const Dict>>(v_); }
    bool is_stream() const { return std::holds_alternative<std::shared_ptr<const Stream>>(v_); }
    bool is_ref() const { return std::holds_alternative<Ref>(v_); }

    bool as_bool() const { return std::get<bool>(v_); }
    int64_t as_int() const;
    double as_number() const;
    const std::string& as_name() const { return std::get<Name>(v_).value; }
    const std::string& as_string() const { return std::get<std::string>(v_); }
    const Array& as_array() const { return *std::get<std::shared_ptr<const Array>>(v_); }
    const Dict& as_dict() const { return *std::get<std::shared_ptr<const Dict>>(v_); }
    const Stream& as_stream() const { return *std::get<std::shared_ptr<const Stream>>(v_); }
    std::shared_ptr<const Stream> stream_ptr() const {
        return std::get<std::shared_ptr<const Stream>>(v_);
    }
    Ref as_ref() const { return std::get<Ref>(v_); }

private:
    Storage v_;
};

/// Small ordered dictionary; PDF dictionaries rarely exceed a dozen keys.
class Dict {
public:
    using Entry = std::pair<std::string, Object>;

    void set(std::string key, Object value);
    const Object* find(std::string_view key) const;
    /// Returns a null object when absent.
    const Object& get(std::string_view key) const;
    bool contains(std::string_view key) const { return find(key) != nullptr; }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

struct Stream {
    Dict dict;
    std::string raw; // still encoded
};

} // namespace polydoc::pdf
