#include "pscdn/io.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace pscdn {

namespace {

constexpr std::uint16_t kWeightsVersion = 1;
constexpr char kWeightsMagic[4] = {'P', 'S', 'C', 'D'};
constexpr char kDatasetMagic[4] = {'Q', 'P', 'S', 'D'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
  public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return next(); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(next() | (next() << 8)); }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(next()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(next()) << (8 * i);
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }

  private:
    std::uint8_t next() {
        if (pos_ >= size_) throw TruncatedFileError("unexpected end of file");
        return data_[pos_++];
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return data;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write file: " + path);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw IoError("write failed: " + path);
}

const std::array<std::uint32_t, 256>& crc_table() {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
    std::uint32_t c = 0xffffffffu;
    for (std::size_t i = 0; i < size; ++i) {
        c = crc_table()[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    }
    return c ^ 0xffffffffu;
}

void save_weights(const NetworkSpec& spec, const ParameterStore& params, const std::string& path) {
    std::vector<std::uint8_t> payload;
    put_u16(payload, static_cast<std::uint16_t>(spec.K));
    put_u16(payload, static_cast<std::uint16_t>(spec.C));
    put_u16(payload, static_cast<std::uint16_t>(spec.N));
    payload.push_back(static_cast<std::uint8_t>(spec.bn_variant));
    payload.push_back(spec.denoising ? 1 : 0);
    put_u32(payload, static_cast<std::uint32_t>(params.layers.size()));
    for (const auto& lp : params.layers) {
        put_u16(payload, static_cast<std::uint16_t>(lp.id.size()));
        for (char c : lp.id) payload.push_back(static_cast<std::uint8_t>(c));
        payload.push_back(lp.has_batch_norm ? 4 : 2);  // array count
        // weights: dims (out, in, k)
        payload.push_back(3);
        put_u32(payload, static_cast<std::uint32_t>(lp.kernel.out_channels));
        put_u32(payload, static_cast<std::uint32_t>(lp.kernel.in_channels));
        put_u32(payload, static_cast<std::uint32_t>(lp.kernel.kernel_size));
        for (double w : lp.kernel.weights) put_f32(payload, static_cast<float>(w));
        // bias: dims (out)
        payload.push_back(1);
        put_u32(payload, static_cast<std::uint32_t>(lp.kernel.bias.size()));
        for (double b : lp.kernel.bias) put_f32(payload, static_cast<float>(b));
        if (lp.has_batch_norm) {
            payload.push_back(1);
            put_u32(payload, static_cast<std::uint32_t>(lp.bn_running_mean.size()));
            for (double v : lp.bn_running_mean) put_f32(payload, static_cast<float>(v));
            payload.push_back(1);
            put_u32(payload, static_cast<std::uint32_t>(lp.bn_running_var.size()));
            for (double v : lp.bn_running_var) put_f32(payload, static_cast<float>(v));
        }
    }

    std::vector<std::uint8_t> file;
    file.insert(file.end(), kWeightsMagic, kWeightsMagic + 4);
    put_u16(file, kWeightsVersion);
    file.insert(file.end(), payload.begin(), payload.end());
    put_u32(file, crc32(payload.data(), payload.size()));
    write_file(path, file);
}

std::pair<NetworkSpec, ParameterStore> load_weights(const std::string& path) {
    std::vector<std::uint8_t> file = read_file(path);
    if (file.size() < 10) throw TruncatedFileError("weights file too short: " + path);
    if (std::memcmp(file.data(), kWeightsMagic, 4) != 0) {
        throw IoError("bad magic in weights file: " + path);
    }
    Reader header(file.data() + 4, 2);
    const std::uint16_t version = header.u16();
    if (version != kWeightsVersion) {
        throw VersionError("unsupported weights format version " + std::to_string(version));
    }
    const std::size_t payload_size = file.size() - 6 - 4;
    const std::uint8_t* payload = file.data() + 6;
    Reader tail(file.data() + 6 + payload_size, 4);
    if (tail.u32() != crc32(payload, payload_size)) {
        throw ChecksumError("weights file checksum mismatch: " + path);
    }

    Reader r(payload, payload_size);
    const int K = r.u16();
    const int C = r.u16();
    const int N = r.u16();
    const char variant = static_cast<char>(r.u8());
    const bool denoising = r.u8() != 0;
    NetworkSpec spec = denoising ? build_pscdn(K, N, C)
                                 : build_pscn_variant(variant == 0 ? 'a' : variant, K, N, C);
    if (variant == 0) spec.bn_variant = 0;

    const std::uint32_t layer_count = r.u32();
    ParameterStore store;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        LayerParams lp;
        const std::uint16_t id_len = r.u16();
        for (std::uint16_t i = 0; i < id_len; ++i) lp.id.push_back(static_cast<char>(r.u8()));
        const std::uint8_t arrays = r.u8();
        if (arrays != 2 && arrays != 4) throw IoError("bad array count in weights file");
        auto read_dims = [&r](int expected_ndims) {
            const std::uint8_t nd = r.u8();
            if (nd != expected_ndims) throw IoError("bad record rank in weights file");
            std::vector<std::uint32_t> dims(nd);
            for (auto& d : dims) d = r.u32();
            return dims;
        };
        auto wd = read_dims(3);
        lp.kernel = ConvKernel(static_cast<int>(wd[0]), static_cast<int>(wd[1]), static_cast<int>(wd[2]));
        for (auto& w : lp.kernel.weights) w = r.f32();
        auto bd = read_dims(1);
        if (bd[0] != static_cast<std::uint32_t>(lp.kernel.out_channels)) {
            throw IoError("bias size mismatch in weights file");
        }
        for (auto& b : lp.kernel.bias) b = r.f32();
        if (arrays == 4) {
            lp.has_batch_norm = true;
            auto md = read_dims(1);
            lp.bn_running_mean.resize(md[0]);
            for (auto& v : lp.bn_running_mean) v = r.f32();
            auto vd = read_dims(1);
            lp.bn_running_var.resize(vd[0]);
            for (auto& v : lp.bn_running_var) v = r.f32();
        }
        store.layers.push_back(std::move(lp));
    }
    return {std::move(spec), std::move(store)};
}

void save_dataset(const std::vector<PhaseSample>& samples, int K, const std::string& path) {
    std::vector<std::uint8_t> file;
    file.insert(file.end(), kDatasetMagic, kDatasetMagic + 4);
    put_u64(file, samples.size());
    put_u16(file, static_cast<std::uint16_t>(K));
    std::uint8_t acc = 0;
    int filled = 0;
    for (const auto& s : samples) {
        if (static_cast<int>(s.bits.size()) != K) throw IoError("sample bit width mismatch");
        for (auto b : s.bits) {
            acc = static_cast<std::uint8_t>((acc << 1) | (b & 1));
            if (++filled == 8) {
                file.push_back(acc);
                acc = 0;
                filled = 0;
            }
        }
    }
    if (filled > 0) file.push_back(static_cast<std::uint8_t>(acc << (8 - filled)));
    write_file(path, file);
}

std::vector<PhaseSample> load_dataset(const std::string& path) {
    std::vector<std::uint8_t> file = read_file(path);
    if (file.size() < 14) throw TruncatedFileError("dataset file too short: " + path);
    if (std::memcmp(file.data(), kDatasetMagic, 4) != 0) {
        throw IoError("bad magic in dataset file: " + path);
    }
    Reader r(file.data() + 4, file.size() - 4);
    const std::uint64_t count = r.u64();
    const int K = r.u16();
    if (K < 1 || K > 30) throw IoError("bad K in dataset file");
    const std::uint64_t total_bits = count * K;
    if (r.remaining() * 8 < total_bits) throw TruncatedFileError("dataset payload truncated: " + path);
    std::vector<PhaseSample> out;
    out.reserve(count);
    std::uint64_t bit_pos = 0;
    const std::uint8_t* bits = file.data() + 14;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t index = 0;
        for (int k = 0; k < K; ++k, ++bit_pos) {
            const std::uint8_t byte = bits[bit_pos / 8];
            index = (index << 1) | ((byte >> (7 - bit_pos % 8)) & 1u);
        }
        PhaseSample s;
        s.index = index;
        s.bits = bits_from_index(index, K);
        s.radians = index * (2.0 * 3.14159265358979323846 / (1u << K));
        out.push_back(std::move(s));
    }
    return out;
}

void export_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
    if (records.empty()) throw IoError("export_metrics_csv: no records");
    std::ostringstream os;
    os << "epoch,train_loss,val_nmse_linear,val_nmse_db,ber,phase_nmse,lr,wall_time_s\n";
    char buf[64];
    auto num = [&buf](double v) {
        // shortest representation that round-trips exactly
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    };
    for (const auto& r : records) {
        os << r.epoch << ',' << num(r.train_loss) << ',' << num(r.val_nmse_linear) << ','
           << num(r.val_nmse_db) << ',' << num(r.bit_error_rate) << ',' << num(r.phase_nmse) << ','
           << num(r.lr) << ',' << num(r.wall_time_seconds) << '\n';
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write file: " + path);
    f << os.str();
    if (!f) throw IoError("write failed: " + path);
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw IoError("config line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "model") cfg.model = value;
            else if (key == "preset") cfg.preset = value;
            else if (key == "K") cfg.K = std::stoi(value);
            else if (key == "C") cfg.C = std::stoi(value);
            else if (key == "N") cfg.N = std::stoi(value);
            else if (key == "train_samples") cfg.train_samples = std::stoull(value);
            else if (key == "val_samples") cfg.val_samples = std::stoull(value);
            else if (key == "test_samples") cfg.test_samples = std::stoull(value);
            else if (key == "out_dir") cfg.out_dir = value;
            else if (key == "epochs") cfg.train.epochs = std::stoi(value);
            else if (key == "batch_size") cfg.train.batch_size = std::stoi(value);
            else if (key == "lr0") cfg.train.lr0 = std::stod(value);
            else if (key == "decay_rate") cfg.train.decay_rate = std::stod(value);
            else if (key == "decay_steps") cfg.train.decay_steps = std::stoi(value);
            else if (key == "train_snr_db") cfg.train.train_snr_db = std::stod(value);
            else if (key == "channel_g") cfg.train.channel_g = std::stod(value);
            else if (key == "seed") cfg.train.seed = std::stoull(value);
            else throw IoError("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw IoError("config line " + std::to_string(line_no) + ": bad value for " + key);
        } catch (const std::out_of_range&) {
            throw IoError("config line " + std::to_string(line_no) + ": value out of range for " + key);
        }
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

namespace {

void write_manifest(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write file: " + path);
    f << "format_version=1\n"
      << "model=" << cfg.model << "\n"
      << "preset=" << cfg.preset << "\n"
      << "K=" << cfg.K << "\nC=" << cfg.C << "\nN=" << cfg.N << "\n"
      << "train_samples=" << cfg.train_samples << "\nval_samples=" << cfg.val_samples << "\n"
      << "test_samples=" << cfg.test_samples << "\n"
      << "epochs=" << cfg.train.epochs << "\nbatch_size=" << cfg.train.batch_size << "\n"
      << "lr0=" << cfg.train.lr0 << "\ndecay_rate=" << cfg.train.decay_rate << "\n"
      << "decay_steps=" << cfg.train.decay_steps << "\ntrain_snr_db=" << cfg.train.train_snr_db << "\n"
      << "channel_g=" << cfg.train.channel_g << "\nseed=" << cfg.train.seed << "\n";
}

struct Datasets {
    std::vector<PhaseSample> train, val, test;
};

Datasets make_datasets(const ExperimentConfig& cfg) {
    Datasets d;
    d.train = generate_dataset(cfg.train_samples, cfg.K, cfg.train.seed * 3 + 1);
    d.val = generate_dataset(cfg.val_samples, cfg.K, cfg.train.seed * 3 + 2);
    d.test = generate_dataset(cfg.test_samples, cfg.K, cfg.train.seed * 3 + 3);
    return d;
}

Model train_one(const ExperimentConfig& cfg, const std::string& model_name, int C, const Datasets& data,
                std::vector<MetricsRecord>* records) {
    NetworkSpec spec = build_model(model_name, cfg.K, cfg.N, C);
    Model model(spec, init_parameters(spec, cfg.train.seed));
    auto recs = train(model, data.train, data.val, cfg.train);
    if (records != nullptr) *records = std::move(recs);
    return model;
}

int run_single(const ExperimentConfig& cfg) {
    Datasets data = make_datasets(cfg);
    std::vector<MetricsRecord> records;
    Model model = train_one(cfg, cfg.model, cfg.C, data, &records);
    save_weights(model.spec(), model.params(), cfg.out_dir + "/weights.pscd");
    export_metrics_csv(records, cfg.out_dir + "/metrics.csv");
    MetricsRecord test = evaluate(model, data.test, cfg.train.train_snr_db, cfg.train.seed + 77,
                                  cfg.train.channel_g);
    export_metrics_csv({test}, cfg.out_dir + "/test_metrics.csv");
    std::cout << "test NMSE " << test.val_nmse_linear << " (" << test.val_nmse_db << " dB), BER "
              << test.bit_error_rate << "\n";
    return kExitOk;
}

int run_table1(const ExperimentConfig& cfg) {
    std::ofstream out(cfg.out_dir + "/table1.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write table1.csv");
    out << "variant,cr_num,cr_den,nmse_linear,nmse_db\n";
    for (int C : {2, 3}) {
        ExperimentConfig c = cfg;
        c.C = C;
        Datasets data = make_datasets(c);
        for (char v = 'a'; v <= 'f'; ++v) {
            Model model = train_one(c, std::string("pscn-") + v, C, data, nullptr);
            MetricsRecord test = evaluate(model, data.test, c.train.train_snr_db, c.train.seed + 77,
                                          c.train.channel_g);
            out << v << ',' << C << ',' << c.K << ',' << test.val_nmse_linear << ','
                << test.val_nmse_db << '\n';
            std::cout << "pscn-" << v << " CR=" << C << "/" << c.K << " NMSE "
                      << test.val_nmse_linear << "\n";
        }
    }
    return kExitOk;
}

int run_fig3(const ExperimentConfig& cfg) {
    std::ofstream out(cfg.out_dir + "/fig3_pscdn.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write fig3_pscdn.csv");
    out << "cr_num,cr_den,snr_db,nmse_linear,nmse_db\n";
    for (int C : {2, 3, 4, 5}) {
        ExperimentConfig c = cfg;
        c.C = C;
        Datasets data = make_datasets(c);
        Model model = train_one(c, "pscdn", C, data, nullptr);
        for (double snr : {0.0, 5.0, 10.0, 15.0, 20.0}) {
            MetricsRecord test = evaluate(model, data.test, snr, c.train.seed + 77, c.train.channel_g);
            out << C << ',' << c.K << ',' << snr << ',' << test.val_nmse_linear << ','
                << test.val_nmse_db << '\n';
            std::cout << "pscdn CR=" << C << "/" << c.K << " SNR=" << snr << " NMSE "
                      << test.val_nmse_linear << "\n";
        }
    }
    return kExitOk;
}

int run_table2(const ExperimentConfig& cfg) {
    Datasets data = make_datasets(cfg);
    std::vector<MetricsRecord> records;
    Model model = train_one(cfg, "pscdn", cfg.C, data, &records);
    const long params = count_parameters(model.spec());
    const double seconds = time_inference(model, data.test, 5);
    std::ofstream out(cfg.out_dir + "/table2_pscdn.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write table2_pscdn.csv");
    out << "model,model_size,running_time_s\npscdn," << params << ',' << seconds << '\n';
    std::cout << "pscdn model size " << params << ", running time " << seconds << " s\n";
    return kExitOk;
}

}  // namespace

int run_experiment(const std::string& config_path) {
    ExperimentConfig cfg;
    try {
        cfg = parse_config_file(config_path);
    } catch (const IoError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }
    return run_experiment_config(cfg);
}

int run_experiment_config(const ExperimentConfig& cfg) {
    try {
        std::filesystem::create_directories(cfg.out_dir);
        write_manifest(cfg, cfg.out_dir + "/manifest.txt");
        if (cfg.preset.empty()) return run_single(cfg);
        if (cfg.preset == "table1") return run_table1(cfg);
        if (cfg.preset == "fig3-pscdn") return run_fig3(cfg);
        if (cfg.preset == "table2-pscdn") return run_table2(cfg);
        std::cerr << "unknown preset: " << cfg.preset << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        if (!e.records().empty()) {
            try {
                export_metrics_csv(e.records(), cfg.out_dir + "/metrics_partial.csv");
            } catch (const IoError&) {
            }
        }
        return kExitDivergence;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace pscdn
