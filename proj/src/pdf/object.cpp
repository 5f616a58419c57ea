#include "polydoc/pdf/object.hpp"

#include <cmath>

namespace polydoc::pdf {

Object::Object(Array a) : v_(std::make_shared<const Array>(std::move(a))) {}
Object::Object(Dict d) : v_(std::make_shared<const Dict>(std::move(d))) {}

int64_t Object::as_int() const {
    if (auto* i = std::get_if<int64_t>(&v_)) return *i;
    return static_cast<int64_t>(std::llround(std::get<double>(v_)));
}

double Object::as_number() const {
    if (auto* i = std::get_if<int64_t>(&v_)) return static_cast<double>(*i);
    return std::get<double>(v_);
}

void Dict::set(std::string key, Object value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(key), std::move(value));
}

const Object* Dict::find(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return &v;
    }
    return nullptr;
}

const Object& Dict::get(std::string_view key) const {
    static const Object kNull;
    const Object* o = find(key);
    return o ? *o : kNull;
}

} // namespace polydoc::pdf
