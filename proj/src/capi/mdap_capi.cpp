// SPDX-License-Identifier: Apache-2.0

#include "mdap/mdap.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "core/error.hpp"
#include "core/eval.hpp"
#include "core/log.hpp"
#include "core/model.hpp"
#include "core/pipeline.hpp"

struct mdap_config {
    mdap::RunConfig config;
};

struct mdap_dataset {
    mdap::InteractionDataset dataset;
};

struct mdap_model {
    mdap::Checkpoint checkpoint;
    std::string id;
};

namespace {

thread_local std::string t_error;
thread_local std::string t_summary;
thread_local std::string t_value;

mdap_status status_of(mdap::ErrorKind kind) {
    switch (kind) {
    case mdap::ErrorKind::shape: return MDAP_ERR_SHAPE;
    case mdap::ErrorKind::parameter: return MDAP_ERR_PARAMETER;
    case mdap::ErrorKind::io: return MDAP_ERR_IO;
    case mdap::ErrorKind::parse: return MDAP_ERR_PARSE;
    case mdap::ErrorKind::data: return MDAP_ERR_DATA;
    case mdap::ErrorKind::state: return MDAP_ERR_STATE;
    case mdap::ErrorKind::numeric: return MDAP_ERR_NUMERIC;
    case mdap::ErrorKind::training: return MDAP_ERR_TRAINING;
    }
    return MDAP_ERR_INTERNAL;
}

mdap_status fail(mdap_status status, std::string message) {
    t_error = std::move(message);
    return status;
}

template <typename F>
mdap_status guarded(F&& body) {
    try {
        t_error.clear();
        body();
        return MDAP_OK;
    } catch (const mdap::Error& e) {
        return fail(status_of(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(MDAP_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(MDAP_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(MDAP_ERR_INTERNAL, "unknown error");
    }
}

#define MDAP_REQUIRE(cond, what)                                    \
    do {                                                            \
        if (!(cond)) {                                              \
            return fail(MDAP_ERR_INVALID_ARGUMENT, what);           \
        }                                                           \
    } while (0)

mdap::Domain to_domain(mdap_domain d) { return d == MDAP_DOMAIN_SOURCE ? mdap::Domain::source : mdap::Domain::target; }

bool valid_domain(mdap_domain d) { return d == MDAP_DOMAIN_SOURCE || d == MDAP_DOMAIN_TARGET; }

bool valid_split(mdap_split s) { return s == MDAP_SPLIT_TRAIN || s == MDAP_SPLIT_VALID || s == MDAP_SPLIT_TEST; }

void check_compatible(const mdap_model* model, const mdap_dataset* dataset) {
    const auto& p = model->checkpoint.params;
    const auto& ds = dataset->dataset;
    if (p.items_s != ds.num_items(mdap::Domain::source) || p.items_t != ds.num_items(mdap::Domain::target)) {
        throw mdap::DataError("model item counts do not match the dataset");
    }
}

std::vector<double> user_scores(const mdap_model* model, const mdap_dataset* dataset, std::size_t user,
                                mdap::Domain domain) {
    check_compatible(model, dataset);
    if (user >= dataset->dataset.num_users()) {
        throw mdap::ParameterError("user index " + std::to_string(user) + " out of range");
    }
    const std::size_t users[] = {user};
    const auto scores =
        mdap::predict_scores(model->checkpoint.params, model->checkpoint.config, dataset->dataset, users);
    const auto row = scores[mdap::index_of(domain)].row(0);
    return {row.begin(), row.end()};
}

} // namespace

extern "C" {

MDAP_API const char* mdap_version(void) { return "0.1.0"; }

MDAP_API const char* mdap_last_error(void) { return t_error.c_str(); }

MDAP_API const char* mdap_last_summary(void) { return t_summary.c_str(); }

MDAP_API int mdap_exit_code(mdap_status status) {
    switch (status) {
    case MDAP_OK: return 0;
    case MDAP_ERR_NUMERIC:
    case MDAP_ERR_TRAINING: return 3;
    case MDAP_ERR_INTERNAL: return 1;
    default: return 2;
    }
}

MDAP_API void mdap_set_log_handler(mdap_log_handler handler, void* user_data) {
    if (handler == nullptr) {
        mdap::set_log_sink({});
        return;
    }
    mdap::set_log_sink([handler, user_data](mdap::LogLevel level, const std::string& message) {
        handler(static_cast<mdap_log_level>(level), message.c_str(), user_data);
    });
}

MDAP_API mdap_status mdap_config_create(mdap_config** out) {
    MDAP_REQUIRE(out != nullptr, "output pointer is null");
    *out = nullptr;
    return guarded([&] { *out = new mdap_config{}; });
}

MDAP_API void mdap_config_destroy(mdap_config* config) { delete config; }

MDAP_API mdap_status mdap_config_set(mdap_config* config, const char* key, const char* value) {
    MDAP_REQUIRE(config != nullptr && key != nullptr && value != nullptr, "null argument");
    // a failed set leaves the config untouched
    return guarded([&] {
        mdap::RunConfig copy = config->config;
        copy.set(key, value);
        config->config = std::move(copy);
    });
}

MDAP_API mdap_status mdap_config_load_file(mdap_config* config, const char* path) {
    MDAP_REQUIRE(config != nullptr && path != nullptr, "null argument");
    return guarded([&] {
        mdap::RunConfig copy = config->config;
        copy.load_file(path);
        config->config = std::move(copy);
    });
}

MDAP_API mdap_status mdap_config_validate(const mdap_config* config) {
    MDAP_REQUIRE(config != nullptr, "null config");
    return guarded([&] { config->config.validate(); });
}

MDAP_API mdap_status mdap_config_get(const mdap_config* config, const char* key, const char** value) {
    MDAP_REQUIRE(config != nullptr && value != nullptr, "null argument");
    return guarded([&] {
        const std::string canonical = config->config.canonical();
        if (key == nullptr) {
            t_value = canonical;
            *value = t_value.c_str();
            return;
        }
        std::string_view k = key;
        while (!k.empty() && k.front() == '-') {
            k.remove_prefix(1);
        }
        const std::string prefix = std::string(k) + "=";
        std::size_t pos = 0;
        while (pos < canonical.size()) {
            const std::size_t end = canonical.find('\n', pos);
            const std::string_view line(canonical.data() + pos, end - pos);
            if (line.starts_with(prefix)) {
                t_value = std::string(line.substr(prefix.size()));
                *value = t_value.c_str();
                return;
            }
            pos = end + 1;
        }
        throw mdap::ParameterError("unknown option '" + std::string(k) + "'");
    });
}

MDAP_API mdap_status mdap_config_hash(const mdap_config* config, const char** value) {
    MDAP_REQUIRE(config != nullptr && value != nullptr, "null argument");
    return guarded([&] {
        t_value = config->config.hash();
        *value = t_value.c_str();
    });
}

MDAP_API mdap_status mdap_command_run(const mdap_config* config, const char* command) {
    MDAP_REQUIRE(config != nullptr && command != nullptr, "null argument");
    return guarded([&] { t_summary = mdap::run_command(command, config->config); });
}

MDAP_API mdap_status mdap_dataset_open(const char* dir, mdap_dataset** out) {
    MDAP_REQUIRE(dir != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto prepared = mdap::load_prepared(dir);
        *out = new mdap_dataset{std::move(prepared.dataset)};
    });
}

MDAP_API void mdap_dataset_close(mdap_dataset* dataset) { delete dataset; }

MDAP_API mdap_status mdap_dataset_counts(const mdap_dataset* dataset, size_t* users, size_t* items_s,
                                         size_t* items_t) {
    MDAP_REQUIRE(dataset != nullptr, "null dataset");
    const auto& ds = dataset->dataset;
    if (users != nullptr) {
        *users = ds.num_users();
    }
    if (items_s != nullptr) {
        *items_s = ds.num_items(mdap::Domain::source);
    }
    if (items_t != nullptr) {
        *items_t = ds.num_items(mdap::Domain::target);
    }
    return MDAP_OK;
}

MDAP_API mdap_status mdap_dataset_split_size(const mdap_dataset* dataset, mdap_domain domain, mdap_split split,
                                             size_t* count) {
    MDAP_REQUIRE(dataset != nullptr && count != nullptr, "null argument");
    MDAP_REQUIRE(valid_domain(domain) && valid_split(split), "invalid domain or split");
    *count = dataset->dataset.split_size(to_domain(domain), static_cast<mdap::Split>(split));
    return MDAP_OK;
}

MDAP_API mdap_status mdap_model_load(const char* path, mdap_model** out) {
    MDAP_REQUIRE(path != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto ckpt = mdap::load_checkpoint(path);
        std::string id = mdap::checkpoint_id(ckpt);
        *out = new mdap_model{std::move(ckpt), std::move(id)};
    });
}

MDAP_API mdap_status mdap_model_save(const mdap_model* model, const char* path) {
    MDAP_REQUIRE(model != nullptr && path != nullptr, "null argument");
    return guarded([&] { mdap::save_checkpoint(model->checkpoint, path); });
}

MDAP_API void mdap_model_free(mdap_model* model) { delete model; }

MDAP_API mdap_status mdap_model_id(const mdap_model* model, const char** id) {
    MDAP_REQUIRE(model != nullptr && id != nullptr, "null argument");
    *id = model->id.c_str();
    return MDAP_OK;
}

MDAP_API mdap_status mdap_model_scores(const mdap_model* model, const mdap_dataset* dataset, size_t user,
                                       mdap_domain domain, double* scores, size_t capacity) {
    MDAP_REQUIRE(model != nullptr && dataset != nullptr && scores != nullptr, "null argument");
    MDAP_REQUIRE(valid_domain(domain), "invalid domain");
    return guarded([&] {
        const auto row = user_scores(model, dataset, user, to_domain(domain));
        if (capacity < row.size()) {
            throw mdap::ShapeError("score buffer holds " + std::to_string(capacity) + " values, need " +
                                   std::to_string(row.size()));
        }
        std::copy(row.begin(), row.end(), scores);
    });
}

MDAP_API mdap_status mdap_model_recommend(const mdap_model* model, const mdap_dataset* dataset, size_t user,
                                          mdap_domain domain, size_t k, uint32_t* items, size_t* written) {
    MDAP_REQUIRE(model != nullptr && dataset != nullptr && written != nullptr, "null argument");
    MDAP_REQUIRE(items != nullptr || k == 0, "null item buffer");
    MDAP_REQUIRE(valid_domain(domain), "invalid domain");
    *written = 0;
    return guarded([&] {
        const mdap::Domain d = to_domain(domain);
        const auto row = user_scores(model, dataset, user, d);
        const auto& train = dataset->dataset.interactions[mdap::index_of(d)][mdap::index_of(mdap::Split::train)][user];
        const auto ranked = mdap::top_k(row, train, k);
        std::copy(ranked.begin(), ranked.end(), items);
        *written = ranked.size();
    });
}

MDAP_API mdap_status mdap_model_evaluate(const mdap_model* model, const mdap_dataset* dataset, mdap_split split,
                                         size_t cutoff, mdap_metrics* metrics) {
    MDAP_REQUIRE(model != nullptr && dataset != nullptr && metrics != nullptr, "null argument");
    MDAP_REQUIRE(valid_split(split), "invalid split");
    MDAP_REQUIRE(cutoff > 0, "cutoff must be positive");
    return guarded([&] {
        check_compatible(model, dataset);
        const auto report = mdap::evaluate(model->checkpoint.params, model->checkpoint.config, dataset->dataset,
                                           static_cast<mdap::Split>(split), cutoff);
        metrics->cutoff = report.cutoff;
        for (std::size_t d = 0; d < 2; ++d) {
            metrics->domains[d] = {report.domains[d].recall, report.domains[d].ndcg, report.domains[d].n_users};
        }
    });
}

} // extern "C"
