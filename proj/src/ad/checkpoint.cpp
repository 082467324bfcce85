// SPDX-License-Identifier: Apache-2.0
#include "gnndt/ad/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "gnndt/error.hpp"

namespace gnndt::ad {

namespace {

constexpr char kMagic[8] = {'G', 'N', 'D', 'T', 'C', 'K', 'P', 'T'};

class Writer {
public:
    template <class V>
    void put(V v) {
        static_assert(std::is_trivially_copyable_v<V>);
        unsigned char b[sizeof(V)];
        std::memcpy(b, &v, sizeof(V));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(V));
        buf.insert(buf.end(), b, b + sizeof(V));
    }
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf.insert(buf.end(), c, c + n);
    }
    std::vector<unsigned char> buf;
};

class Reader {
public:
    Reader(const std::vector<unsigned char>& b, std::size_t end) : buf(b), end_(end) {}
    template <class V>
    V get() {
        need(sizeof(V));
        unsigned char b[sizeof(V)];
        std::memcpy(b, buf.data() + pos, sizeof(V));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(V));
        pos += sizeof(V);
        V v;
        std::memcpy(&v, b, sizeof(V));
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
    void need(std::size_t n) const {
        if (pos + n > end_) throw RuntimeFailure("checkpoint truncated");
    }
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;

private:
    std::size_t end_;
};

std::uint64_t fnv(const unsigned char* p, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t k = 0; k < n; ++k) {
        h ^= p[k];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

template <class T>
void save_checkpoint(const std::string& path, const ParameterStore<T>& params, const AdamW<T>* optimizer,
                     const nlohmann::json& sidecar) {
    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(sizeof(T));
    w.put<std::int64_t>(optimizer ? optimizer->step_count() : 0);
    const auto ps = params.all();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ps.size()));
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto* p = ps[k];
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p->name.size()));
        w.bytes(p->name.data(), p->name.size());
        w.put<std::int32_t>(p->value.rows);
        w.put<std::int32_t>(p->value.cols);
        w.put<std::uint8_t>(p->decay ? 1 : 0);
        for (T v : p->value.data) w.put<T>(v);
        const bool has = optimizer != nullptr;
        w.put<std::uint8_t>(has ? 1 : 0);
        if (has) {
            const auto& st = optimizer->moments().at(k);
            for (std::size_t e = 0; e < p->value.size(); ++e) w.put<double>(e < st.m.size() ? st.m[e] : 0.0);
            for (std::size_t e = 0; e < p->value.size(); ++e) w.put<double>(e < st.v.size() ? st.v[e] : 0.0);
        }
    }
    w.put<std::uint64_t>(fnv(w.buf.data(), w.buf.size()));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw RuntimeFailure("short write on checkpoint '" + path + "'");
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw RuntimeFailure("cannot write checkpoint sidecar '" + path + ".json'");
    side << sidecar.dump(2) << '\n';
}

template <class T>
nlohmann::json load_checkpoint(const std::string& path, ParameterStore<T>& params, AdamW<T>* optimizer) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open checkpoint '" + path + "'");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kMagic) + 8) throw RuntimeFailure("checkpoint '" + path + "' truncated");
    Reader tail(buf, buf.size());
    tail.pos = buf.size() - 8;
    if (tail.get<std::uint64_t>() != fnv(buf.data(), buf.size() - 8))
        throw RuntimeFailure("checkpoint '" + path + "' checksum mismatch");
    Reader r(buf, buf.size() - 8);
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) throw RuntimeFailure("not a checkpoint: '" + path + "'");
    r.pos = sizeof(kMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw RuntimeFailure("unsupported checkpoint version " + std::to_string(version));
    const auto width = r.get<std::uint32_t>();
    if (width != 4 && width != 8) throw RuntimeFailure("bad scalar width in checkpoint");
    const auto step = r.get<std::int64_t>();
    const auto count = r.get<std::uint32_t>();
    if (count != params.num_tensors())
        throw ConfigError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(params.num_tensors()));
    auto ps = params.all();
    std::vector<std::pair<Matrix<T>, AdamMoments>> staged(count);
    std::vector<Parameter<T>*> targets(count);
    bool all_moments = true;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = r.get<std::uint32_t>();
        const std::string name = r.str(len);
        const auto rows = r.get<std::int32_t>();
        const auto cols = r.get<std::int32_t>();
        r.get<std::uint8_t>();
        auto* p = params.find(name);
        if (!p) throw ConfigError("checkpoint tensor '" + name + "' unknown to the model");
        if (p->value.rows != rows || p->value.cols != cols)
            throw ConfigError("checkpoint tensor '" + name + "' has shape [" + std::to_string(rows) + "x" +
                              std::to_string(cols) + "], model expects " + p->value.shape_str());
        Matrix<T> v(rows, cols);
        for (auto& x : v.data) x = width == 4 ? static_cast<T>(r.get<float>()) : static_cast<T>(r.get<double>());
        AdamMoments mo;
        if (r.get<std::uint8_t>()) {
            mo.m.resize(v.size());
            mo.v.resize(v.size());
            for (auto& x : mo.m) x = r.get<double>();
            for (auto& x : mo.v) x = r.get<double>();
        } else {
            all_moments = false;
        }
        staged[k] = {std::move(v), std::move(mo)};
        targets[k] = p;
    }
    if (r.pos != buf.size() - 8) throw RuntimeFailure("trailing bytes in checkpoint '" + path + "'");
    if (optimizer && !all_moments) throw ConfigError("checkpoint '" + path + "' carries no optimizer state");
    for (std::uint32_t k = 0; k < count; ++k) {
        targets[k]->value = std::move(staged[k].first);
        targets[k]->grad = Matrix<T>(targets[k]->value.rows, targets[k]->value.cols);
    }
    if (optimizer) {
        auto& moments = optimizer->moments();
        for (std::uint32_t k = 0; k < count; ++k) {
            const auto it = std::find(ps.begin(), ps.end(), targets[k]);
            moments.at(static_cast<std::size_t>(it - ps.begin())) = std::move(staged[k].second);
        }
        optimizer->set_step_count(step);
    }
    return read_checkpoint_sidecar(path);
}

nlohmann::json read_checkpoint_sidecar(const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) return nullptr;
    try {
        return nlohmann::json::parse(side);
    } catch (const nlohmann::json::exception& e) {
        throw RuntimeFailure("bad checkpoint sidecar '" + path + ".json': " + e.what());
    }
}

template void save_checkpoint<float>(const std::string&, const ParameterStore<float>&, const AdamW<float>*,
                                     const nlohmann::json&);
template void save_checkpoint<double>(const std::string&, const ParameterStore<double>&, const AdamW<double>*,
                                      const nlohmann::json&);
template nlohmann::json load_checkpoint<float>(const std::string&, ParameterStore<float>&, AdamW<float>*);
template nlohmann::json load_checkpoint<double>(const std::string&, ParameterStore<double>&, AdamW<double>*);

}  // namespace gnndt::ad
