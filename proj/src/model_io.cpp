#include "ventus/model_io.hpp"

#include <bit>
#include <cstring>

#include "ventus/error.hpp"
#include "ventus/io_util.hpp"

namespace ventus {

const Eigen::MatrixXd& ModelContainer::block(const std::string& name) const {
    for (const auto& [n, m] : blocks)
        if (n == name) return m;
    throw MissingKeyError("model has no block '" + name + "'");
}

namespace {

static_assert(std::endian::native == std::endian::little, "model files are written little-endian");

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    Reader(const std::string& b, std::size_t start) : b_(b), pos_(start) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void get_doubles(double* dst, std::size_t n) {
        need(n * sizeof(double));
        std::memcpy(dst, b_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw PayloadLengthError("model file truncated at byte " + std::to_string(pos_));
    }
    const std::string& b_;
    std::size_t pos_;
};

}  // namespace

std::string encode_model(const ModelContainer& m) {
    std::string out(kModelMagic, sizeof(kModelMagic));
    put<std::uint32_t>(out, kModelVersion);
    put_string(out, m.kind);
    put_string(out, m.config_text);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.blocks.size()));
    for (const auto& [name, mat] : m.blocks) {
        put_string(out, name);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(mat.rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(mat.cols()));
        out.append(reinterpret_cast<const char*>(mat.data()), sizeof(double) * static_cast<std::size_t>(mat.size()));
    }
    return out;
}

ModelContainer decode_model(const std::string& bytes) {
    if (bytes.size() < sizeof(kModelMagic) || std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0)
        throw BadMagicError("not a model file");
    Reader r(bytes, sizeof(kModelMagic));
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion) throw ValidationError("unsupported model version " + std::to_string(version));
    ModelContainer m;
    m.kind = r.get_string();
    m.config_text = r.get_string();
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.get_string();
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        if (rows > (1u << 28) || cols > (1u << 28)) throw ShapeError("implausible block shape for '" + name + "'");
        Eigen::MatrixXd mat(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        r.get_doubles(mat.data(), static_cast<std::size_t>(rows * cols));
        m.blocks.emplace_back(std::move(name), std::move(mat));
    }
    if (!r.done()) throw PayloadLengthError("trailing bytes after the last block");
    return m;
}

void write_model(const std::filesystem::path& path, const ModelContainer& m) { write_file(path, encode_model(m)); }

ModelContainer read_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace ventus
