// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared library through its public header only.

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "mdap/mdap.h"

namespace fs = std::filesystem;

namespace {

struct ConfigDeleter {
    void operator()(mdap_config* c) const { mdap_config_destroy(c); }
};
struct DatasetDeleter {
    void operator()(mdap_dataset* d) const { mdap_dataset_close(d); }
};
struct ModelDeleter {
    void operator()(mdap_model* m) const { mdap_model_free(m); }
};

using ConfigPtr = std::unique_ptr<mdap_config, ConfigDeleter>;

ConfigPtr make_config() {
    mdap_config* raw = nullptr;
    EXPECT_EQ(mdap_config_create(&raw), MDAP_OK);
    return ConfigPtr(raw);
}

class CapiRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / ("mdap-capi-" + std::to_string(::getpid()));
        fs::remove_all(root_);
        auto cfg = make_config();
        const auto set = [&](const char* k, const std::string& v) {
            ASSERT_EQ(mdap_config_set(cfg.get(), k, v.c_str()), MDAP_OK) << mdap_last_error();
        };
        set("out", (root_ / "raw").string());
        ASSERT_EQ(mdap_command_run(cfg.get(), "synth"), MDAP_OK) << mdap_last_error();
        set("domain-s", (root_ / "raw" / "domain_s.tsv").string());
        set("domain-t", (root_ / "raw" / "domain_t.tsv").string());
        set("out", (root_ / "run").string());
        set("min-interactions", "1");
        ASSERT_EQ(mdap_command_run(cfg.get(), "prepare"), MDAP_OK) << mdap_last_error();
        set("epochs", "2");
        set("k", "3");
        set("embed-dim", "8");
        set("hidden", "16");
        ASSERT_EQ(mdap_command_run(cfg.get(), "train"), MDAP_OK) << mdap_last_error();
        EXPECT_NE(std::string(mdap_last_summary()).find("trained"), std::string::npos);
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static fs::path root_;
};

fs::path CapiRun::root_;

} // namespace

TEST(Capi, VersionAndExitCodes) {
    EXPECT_STREQ(mdap_version(), "0.1.0");
    EXPECT_EQ(mdap_exit_code(MDAP_OK), 0);
    EXPECT_EQ(mdap_exit_code(MDAP_ERR_PARAMETER), 2);
    EXPECT_EQ(mdap_exit_code(MDAP_ERR_PARSE), 2);
    EXPECT_EQ(mdap_exit_code(MDAP_ERR_DATA), 2);
    EXPECT_EQ(mdap_exit_code(MDAP_ERR_NUMERIC), 3);
    EXPECT_EQ(mdap_exit_code(MDAP_ERR_TRAINING), 3);
    EXPECT_EQ(mdap_exit_code(MDAP_ERR_INTERNAL), 1);
}

TEST(Capi, NullArgumentsRejected) {
    EXPECT_EQ(mdap_config_create(nullptr), MDAP_ERR_INVALID_ARGUMENT);
    EXPECT_EQ(mdap_config_set(nullptr, "k", "1"), MDAP_ERR_INVALID_ARGUMENT);
    EXPECT_STRNE(mdap_last_error(), "");
    mdap_config_destroy(nullptr);
    mdap_dataset_close(nullptr);
    mdap_model_free(nullptr);
}

TEST(Capi, ConfigSetGetAndErrors) {
    auto cfg = make_config();
    EXPECT_EQ(mdap_config_set(cfg.get(), "--tau", "0.5"), MDAP_OK);
    const char* value = nullptr;
    ASSERT_EQ(mdap_config_get(cfg.get(), "tau", &value), MDAP_OK);
    EXPECT_STREQ(value, "0.5");
    EXPECT_EQ(mdap_config_set(cfg.get(), "tau", "warm"), MDAP_ERR_PARAMETER);
    ASSERT_EQ(mdap_config_get(cfg.get(), "tau", &value), MDAP_OK);
    EXPECT_STREQ(value, "0.5");
    EXPECT_EQ(mdap_config_set(cfg.get(), "flavour", "x"), MDAP_ERR_PARAMETER);
    EXPECT_NE(std::string(mdap_last_error()).find("flavour"), std::string::npos);
    EXPECT_EQ(mdap_config_get(cfg.get(), "flavour", &value), MDAP_ERR_PARAMETER);
    EXPECT_EQ(mdap_config_set(cfg.get(), "tau", "-1"), MDAP_OK);
    EXPECT_EQ(mdap_config_validate(cfg.get()), MDAP_ERR_PARAMETER);
    EXPECT_EQ(mdap_config_load_file(cfg.get(), "/nonexistent.conf"), MDAP_ERR_IO);
    const char* hash = nullptr;
    ASSERT_EQ(mdap_config_hash(cfg.get(), &hash), MDAP_OK);
    EXPECT_EQ(std::strlen(hash), 16u);
    EXPECT_EQ(mdap_command_run(cfg.get(), "serve"), MDAP_ERR_PARAMETER);
}

TEST(Capi, LogHandlerReceivesMessages) {
    std::vector<std::string> seen;
    mdap_set_log_handler(
        [](mdap_log_level, const char* msg, void* user) {
            static_cast<std::vector<std::string>*>(user)->push_back(msg);
        },
        &seen);
    const auto dir = fs::temp_directory_path() / ("mdap-capi-log-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    {
        std::FILE* f = std::fopen((dir / "s.tsv").c_str(), "w");
        std::fputs("u1\ti1\t5\nbroken\nu2\ti1\t5\n", f);
        std::fclose(f);
        f = std::fopen((dir / "t.tsv").c_str(), "w");
        std::fputs("u1\tj1\t5\nu2\tj2\t5\n", f);
        std::fclose(f);
    }
    auto cfg = make_config();
    mdap_config_set(cfg.get(), "domain-s", (dir / "s.tsv").c_str());
    mdap_config_set(cfg.get(), "domain-t", (dir / "t.tsv").c_str());
    mdap_config_set(cfg.get(), "out", (dir / "out").c_str());
    mdap_config_set(cfg.get(), "min-interactions", "1");
    EXPECT_EQ(mdap_command_run(cfg.get(), "prepare"), MDAP_OK) << mdap_last_error();
    mdap_set_log_handler(nullptr, nullptr);
    ASSERT_FALSE(seen.empty());
    EXPECT_NE(seen.front().find(":2:"), std::string::npos) << seen.front();
    mdap_config_set(cfg.get(), "strict", "true");
    mdap_config_set(cfg.get(), "out", (dir / "strict").c_str());
    EXPECT_EQ(mdap_command_run(cfg.get(), "prepare"), MDAP_ERR_PARSE);
    EXPECT_FALSE(fs::exists(dir / "strict"));
    fs::remove_all(dir);
}

TEST_F(CapiRun, DatasetAndModelHandles) {
    mdap_dataset* ds_raw = nullptr;
    ASSERT_EQ(mdap_dataset_open((root_ / "run").c_str(), &ds_raw), MDAP_OK) << mdap_last_error();
    std::unique_ptr<mdap_dataset, DatasetDeleter> ds(ds_raw);
    size_t users = 0, items_s = 0, items_t = 0;
    ASSERT_EQ(mdap_dataset_counts(ds.get(), &users, &items_s, &items_t), MDAP_OK);
    EXPECT_EQ(users, 200u);
    EXPECT_EQ(items_s, 40u);
    EXPECT_EQ(items_t, 30u);
    size_t n_test = 0;
    ASSERT_EQ(mdap_dataset_split_size(ds.get(), MDAP_DOMAIN_TARGET, MDAP_SPLIT_TEST, &n_test), MDAP_OK);
    EXPECT_GT(n_test, 0u);

    mdap_model* m_raw = nullptr;
    ASSERT_EQ(mdap_model_load((root_ / "run" / "checkpoints" / "best.ckpt").c_str(), &m_raw), MDAP_OK);
    std::unique_ptr<mdap_model, ModelDeleter> model(m_raw);
    const char* id = nullptr;
    ASSERT_EQ(mdap_model_id(model.get(), &id), MDAP_OK);
    EXPECT_EQ(std::strlen(id), 16u);

    std::vector<double> scores(items_t);
    ASSERT_EQ(mdap_model_scores(model.get(), ds.get(), 0, MDAP_DOMAIN_TARGET, scores.data(), scores.size()), MDAP_OK);
    EXPECT_EQ(mdap_model_scores(model.get(), ds.get(), 0, MDAP_DOMAIN_TARGET, scores.data(), 3), MDAP_ERR_SHAPE);
    EXPECT_EQ(mdap_model_scores(model.get(), ds.get(), users, MDAP_DOMAIN_TARGET, scores.data(), scores.size()),
              MDAP_ERR_PARAMETER);

    std::vector<uint32_t> items(10);
    size_t written = 0;
    ASSERT_EQ(mdap_model_recommend(model.get(), ds.get(), 0, MDAP_DOMAIN_SOURCE, 10, items.data(), &written), MDAP_OK);
    EXPECT_EQ(written, 10u);
    for (size_t i = 0; i < written; ++i) {
        EXPECT_LT(items[i], items_s);
    }

    mdap_metrics a{}, b{};
    ASSERT_EQ(mdap_model_evaluate(model.get(), ds.get(), MDAP_SPLIT_TEST, 20, &a), MDAP_OK);
    ASSERT_EQ(mdap_model_evaluate(model.get(), ds.get(), MDAP_SPLIT_TEST, 20, &b), MDAP_OK);
    EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
    EXPECT_EQ(a.cutoff, 20u);
    EXPECT_GT(a.domains[0].n_users, 0u);

    const auto copy = root_ / "copy.ckpt";
    ASSERT_EQ(mdap_model_save(model.get(), copy.c_str()), MDAP_OK);
    mdap_model* again = nullptr;
    ASSERT_EQ(mdap_model_load(copy.c_str(), &again), MDAP_OK);
    const char* id2 = nullptr;
    mdap_model_id(again, &id2);
    EXPECT_STREQ(id, id2);
    mdap_model_free(again);
}

TEST_F(CapiRun, MissingFilesReportErrors) {
    mdap_dataset* ds = nullptr;
    EXPECT_EQ(mdap_dataset_open((root_ / "nope").c_str(), &ds), MDAP_ERR_DATA);
    EXPECT_EQ(ds, nullptr);
    mdap_model* m = nullptr;
    EXPECT_EQ(mdap_model_load((root_ / "nope.ckpt").c_str(), &m), MDAP_ERR_IO);
    EXPECT_EQ(m, nullptr);
}
