#include "kmgan/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace kmgan {

namespace {

constexpr char kMagic[4] = {'K', 'M', 'G', '1'};

template <typename T>
void put_le(std::vector<char>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

    template <typename T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    }
    const std::vector<char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void Archive::put(std::string name, Matrix value) {
    for (auto& [n, v] : entries_)
        if (n == name) {
            v = std::move(value);
            return;
        }
    entries_.emplace_back(std::move(name), std::move(value));
}

const Matrix& Archive::get(const std::string& name) const {
    for (const auto& [n, v] : entries_)
        if (n == name) return v;
    throw CheckpointError("checkpoint has no entry '" + name + "'");
}

bool Archive::contains(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.first == name) return true;
    return false;
}

void Archive::put_params(const std::string& prefix, const ParamSet& params) {
    for (const auto& p : params.entries()) put(prefix + "." + p.name, p.tensor.value());
    Matrix step(1, 1);
    step(0, 0) = static_cast<double>(params.step);
    put(prefix + ".@step", std::move(step));
}

void Archive::get_params(const std::string& prefix, ParamSet& params) const {
    for (auto& p : params.entries()) {
        const Matrix& v = get(prefix + "." + p.name);
        if (v.rows() != p.tensor.rows() || v.cols() != p.tensor.cols())
            throw CheckpointError("checkpoint shape mismatch for " + prefix + "." + p.name);
        require_finite(v, "checkpoint entry " + prefix + "." + p.name);
        p.tensor.mutable_value() = v;
    }
    if (contains(prefix + ".@step")) params.step = static_cast<std::uint64_t>(get(prefix + ".@step")(0, 0));
}

void Archive::put_adam(const std::string& prefix, const AdamState& state) {
    Matrix cfg(1, 5);
    cfg << state.config.alpha, state.config.beta1, state.config.beta2, state.config.epsilon,
        static_cast<double>(state.t);
    put(prefix + ".@config", std::move(cfg));
    for (const auto& [name, m] : state.first_moment) put(prefix + ".m." + name, m);
    for (const auto& [name, v] : state.second_moment) put(prefix + ".v." + name, v);
}

AdamState Archive::get_adam(const std::string& prefix) const {
    const Matrix& cfg = get(prefix + ".@config");
    if (cfg.cols() != 5) throw CheckpointError("malformed Adam config entry");
    AdamState st(AdamConfig{cfg(0, 0), cfg(0, 1), cfg(0, 2), cfg(0, 3)});
    st.t = static_cast<std::uint64_t>(cfg(0, 4));
    const std::string m_prefix = prefix + ".m.";
    const std::string v_prefix = prefix + ".v.";
    for (const auto& [name, value] : entries_) {
        if (name.rfind(m_prefix, 0) == 0) st.first_moment[name.substr(m_prefix.size())] = value;
        if (name.rfind(v_prefix, 0) == 0) st.second_moment[name.substr(v_prefix.size())] = value;
    }
    return st;
}

void Archive::put_network(const std::string& prefix, const Network& net) {
    put(prefix + ".@spec", net.spec.encode());
    put_params(prefix, net.params);
}

Network Archive::get_network(const std::string& prefix) const {
    Network net;
    try {
        net.spec = MlpSpec::decode(get(prefix + ".@spec"));
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("corrupt architecture entry: ") + e.what());
    }
    Rng unused(0);
    net.params = init_params(net.spec, unused);
    get_params(prefix, net.params);
    return net;
}

std::vector<char> Archive::serialize() const {
    std::vector<char> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint64_t>(out, entries_.size());
    for (const auto& [name, m] : entries_) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) put_le(out, std::bit_cast<std::uint64_t>(m.data()[i]));
    }
    return out;
}

Archive Archive::deserialize(const std::vector<char>& bytes) {
    Reader in(bytes);
    if (in.str(4) != std::string(kMagic, 4)) throw CheckpointError("bad checkpoint magic");
    const auto count = in.le<std::uint64_t>();
    Archive a;
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto len = in.le<std::uint32_t>();
        std::string name = in.str(len);
        const auto rows = in.le<std::uint64_t>();
        const auto cols = in.le<std::uint64_t>();
        if (rows > (1u << 26) || cols > (1u << 26)) throw CheckpointError("implausible shape in checkpoint");
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(in.le<std::uint64_t>());
        a.entries_.emplace_back(std::move(name), std::move(m));
    }
    if (!in.done()) throw CheckpointError("trailing bytes after checkpoint payload");
    return a;
}

void Archive::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace kmgan
