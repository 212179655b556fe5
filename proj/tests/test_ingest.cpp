#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "fraudkit/config.hpp"
#include "fraudkit/ingest.hpp"
#include "support.hpp"

using namespace fraudkit;
using testsupport::TempDir;
using testsupport::write_file;

namespace {

std::vector<ColumnSchema> schema3() {
    return {{"a", ColumnKind::numeric}, {"b", ColumnKind::numeric}, {"Class", ColumnKind::label}};
}

// SCD-like table: 3075 rows, 448 fraud, Y/N label, an all-empty date column,
// categorical merchant and flag columns.
std::string write_scd_like(const std::string& path) {
    std::string text = "Merchant_id,Transaction date,Average Amount/transaction/day,Is declined,isHighRiskCountry,isFradulent\n";
    for (int r = 0; r < 3075; ++r) {
        const bool fraud = r % 6 == 0 && r < 448 * 6;
        text += "M" + std::to_string(r % 40) + ",," + std::to_string(100 + r % 17) + "," + (r % 5 ? "N" : "Y") + "," +
                (fraud ? "Y" : "N") + "," + (fraud ? "Y" : "N") + "\n";
    }
    return write_file(path, text);
}

}  // namespace

TEST(Encode, FirstAppearanceOrder) {
    const std::vector<std::string> yn = {"Y", "N", "Y"};
    EXPECT_EQ(encode_categoricals(yn), (std::vector<double>{0, 1, 0}));
    const std::vector<std::string> abc = {"a", "b", "c", "a"};
    EXPECT_EQ(encode_categoricals(abc), (std::vector<double>{0, 1, 2, 0}));
    EXPECT_TRUE(encode_categoricals(std::vector<std::string>{}).empty());
}

TEST(Encode, MappingIsBijectiveAndReusable) {
    const std::vector<std::string> col = {"x", "y", "x", "z", "y", "w"};
    std::vector<std::string> mapping;
    const auto codes = encode_categoricals(col, &mapping);
    EXPECT_EQ(mapping, (std::vector<std::string>{"x", "y", "z", "w"}));
    std::set<double> distinct(codes.begin(), codes.end());
    EXPECT_EQ(distinct.size(), mapping.size());
    for (std::size_t i = 0; i < col.size(); ++i) EXPECT_EQ(mapping[static_cast<std::size_t>(codes[i])], col[i]);
    EXPECT_EQ(encode_with_mapping(col, mapping), codes);
}

TEST(LoadCsv, BasicAndOrderInsensitiveHeader) {
    TempDir dir("ingest");
    const auto f = write_file(dir.file("a.csv"), "b,Class,a\n1.5,0,2\n-3,1,4e2\n");
    const Dataset ds = load_csv(f, schema3());
    ASSERT_EQ(ds.n_rows(), 2u);
    ASSERT_EQ(ds.n_features(), 2u);
    // Features follow header order.
    EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"b", "a"}));
    EXPECT_EQ(ds.features(1, 1), 400.0);
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1}));
    EXPECT_EQ(ds.n_pos() + ds.n_neg(), ds.n_rows());
}

TEST(LoadCsv, EmptyFileWithHeaderGivesZeroRows) {
    TempDir dir("ingest");
    const auto f = write_file(dir.file("e.csv"), "a,b,Class\n");
    const Dataset ds = load_csv(f, schema3());
    EXPECT_EQ(ds.n_rows(), 0u);
    EXPECT_EQ(ds.n_features(), 2u);
}

TEST(LoadCsv, Errors) {
    TempDir dir("ingest");
    EXPECT_THROW(load_csv(dir.file("nope.csv"), schema3()), InvalidArgument);
    EXPECT_THROW(load_csv(write_file(dir.file("m.csv"), "a,c,Class\n1,2,0\n"), schema3()), InvalidArgument);
    EXPECT_THROW(load_csv(write_file(dir.file("n.csv"), "a,b,Class\n1,abc,0\n"), schema3()), InvalidArgument);
    EXPECT_THROW(load_csv(write_file(dir.file("l.csv"), "a,b,Class\n1,2,2\n"), schema3()), InvalidArgument);
    auto forbid = schema3();
    forbid[0].missing = MissingPolicy::forbid;
    EXPECT_THROW(load_csv(write_file(dir.file("f.csv"), "a,b,Class\n,2,0\n1,2,1\n"), forbid), InvalidArgument);
    auto two_labels = schema3();
    two_labels[0].kind = ColumnKind::label;
    EXPECT_THROW(load_csv(write_file(dir.file("t.csv"), "a,b,Class\n1,2,0\n"), two_labels), InvalidArgument);
}

TEST(LoadCsv, MissingPolicies) {
    TempDir dir("ingest");
    const auto f = write_file(dir.file("m.csv"), "a,b,Class\n1,,0\n2,5,1\n,6,0\n");
    auto s = schema3();
    // Default drop_row on both: rows 0 and 2 go.
    Dataset ds = load_csv(f, s);
    EXPECT_EQ(ds.n_rows(), 1u);
    EXPECT_EQ(ds.columns[0].n_missing, 1u);
    // drop_column on b: only row 2 goes (a missing).
    s[1].missing = MissingPolicy::drop_column;
    ds = load_csv(f, s);
    EXPECT_EQ(ds.n_rows(), 2u);
    EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"a"}));
}

TEST(LoadCsv, DropKindAndQuotedFields) {
    TempDir dir("ingest");
    const auto f = write_file(dir.file("q.csv"), "id,\"a\",b,Class\n\"x,1\",1,2,0\n\"y\",3,4,1\n");
    std::vector<ColumnSchema> s = {{"id", ColumnKind::drop}, {"a", ColumnKind::numeric}, {"b", ColumnKind::numeric},
                                   {"Class", ColumnKind::label}};
    const Dataset ds = load_csv(f, s);
    EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.features(1, 0), 3.0);
}

TEST(LoadCsv, ScdLikeFixtureWithSchemaFile) {
    TempDir dir("ingest");
    const auto data = write_scd_like(dir.file("scd.csv"));
    const auto schema = write_file(dir.file("scd.schema"),
                                   "[columns]\nMerchant_id = categorical\nTransaction date = numeric\n"
                                   "Average Amount/transaction/day = numeric\nIs declined = categorical\n"
                                   "isHighRiskCountry = categorical\nisFradulent = label\n"
                                   "[missing]\nTransaction date = drop_column\n"
                                   "[label]\npositive = Y\nnegative = N\n");
    const Dataset ds = load_with_schema(data, schema);
    EXPECT_EQ(ds.n_rows(), 3075u);
    EXPECT_EQ(ds.n_pos(), 448u);
    EXPECT_FALSE(ds.feature_index("Transaction date").has_value());
    EXPECT_EQ(ds.n_features(), 4u);
    const auto& merchant = ds.columns[*ds.feature_index("Merchant_id")];
    EXPECT_EQ(merchant.kind, ColumnKind::categorical);
    EXPECT_EQ(merchant.categories.size(), 40u);
    EXPECT_EQ(merchant.categories[0], "M0");
    EXPECT_NEAR(profile(ds).fraud_fraction, 448.0 / 3075.0, 1e-15);
    EXPECT_NEAR(448.0 / 3075.0, 0.1457, 5e-5);
}

TEST(LoadCsv, AllMissingColumnDroppedEvenUnderDropRow) {
    TempDir dir("ingest");
    const auto f = write_file(dir.file("d.csv"), "a,b,Class\n1,,0\n2,NA,1\n3,,0\n");
    const Dataset ds = load_csv(f, schema3());
    EXPECT_EQ(ds.n_rows(), 3u);
    EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"a"}));
}

TEST(LoadCsv, EcdSizedFixture) {
    TempDir dir("ingest");
    const std::string path = dir.file("ecd.csv");
    {
        std::ofstream out(path);
        out << "Time";
        for (int i = 1; i <= 28; ++i) out << ",V" << i;
        out << ",Amount,Class\n";
        std::string line;
        for (int r = 0; r < 284807; ++r) {
            line = std::to_string(r / 2);
            for (int i = 1; i <= 28; ++i) line += "," + std::to_string((r * 31 + i * 7) % 97 - 48);
            line += "," + std::to_string(r % 500) + (r % 579 == 0 && r / 579 < 492 ? ",1\n" : ",0\n");
            out << line;
        }
    }
    const Dataset ds = load_with_schema(path, testsupport::source_path("data/schemas/ecd.schema"));
    EXPECT_EQ(ds.n_rows(), 284807u);
    EXPECT_EQ(ds.n_features(), 30u);
    EXPECT_EQ(ds.n_pos(), 492u);
    // 492 / 284807 = 0.0017275; the text states 0.172%, one unit of its last digit.
    EXPECT_NEAR(profile(ds).fraud_fraction, 0.00172, 0.00001);
}

TEST(LoadCsv, WriteLoadRoundTripIsBitIdentical) {
    TempDir dir("ingest");
    Rng rng(4);
    Matrix X(50, 3);
    std::vector<int> y(50);
    for (auto& v : X.data) v = standard_normal(rng) * 1e3 + uniform01(rng) * 1e-9;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3 == 0);
    Dataset ds = make_dataset(X, y);
    ds.label.name = "Class";
    write_csv(ds, dir.file("rt.csv"));
    const Dataset back = load_csv(dir.file("rt.csv"), numeric_schema(ds.feature_names(), "Class"));
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(back.labels, ds.labels);
}

TEST(Drop, TcdLikeCustIdLeavesSevenFeatures) {
    // custID, gender, state, cardholder, balance, numTrans, numIntlTrans, creditLine, fraudRisk
    TempDir dir("ingest");
    std::string text = "custID,gender,state,cardholder,balance,numTrans,numIntlTrans,creditLine,fraudRisk\n";
    for (int r = 0; r < 200; ++r)
        text += std::to_string(1000 + r) + "," + std::to_string(1 + r % 2) + "," + std::to_string(r % 51) + ",1," +
                std::to_string(r * 13 % 9000) + "," + std::to_string(r % 100) + ",0," + std::to_string(r % 30) + "," +
                (r % 17 == 0 ? "1" : "0") + "\n";
    write_file(dir.file("tcd.csv"), text);
    const Dataset full = load_with_schema(dir.file("tcd.csv"), testsupport::source_path("data/schemas/tcd.schema"));
    EXPECT_EQ(full.n_features(), 7u);  // custID declared as drop in the schema
    EXPECT_FALSE(full.feature_index("custID").has_value());

    // The same drop through drop_uninformative on a numeric-loaded copy.
    std::vector<std::string> feats = {"custID", "gender", "state", "cardholder", "balance", "numTrans", "numIntlTrans", "creditLine"};
    const Dataset raw = load_csv(dir.file("tcd.csv"), numeric_schema(feats, "fraudRisk"));
    EXPECT_EQ(profile(raw).columns[0].n_distinct, raw.n_rows());
    const Dataset dropped = drop_uninformative(raw, "custID");
    EXPECT_EQ(dropped.n_features(), 7u);
    EXPECT_EQ(dropped.features, full.features);
    EXPECT_EQ(dropped.labels, raw.labels);
}

TEST(Drop, ConstantColumnAndErrors) {
    Matrix X(3, 2);
    X(0, 0) = 1, X(1, 0) = 2, X(2, 0) = 3;
    X(0, 1) = X(1, 1) = X(2, 1) = 7;
    const Dataset ds = make_dataset(X, {0, 1, 0});
    const Dataset d = drop_uninformative(ds, "f1");
    EXPECT_EQ(d.n_features(), 1u);
    EXPECT_EQ(d.labels, ds.labels);
    EXPECT_EQ(d.features.column(0), ds.features.column(0));
    EXPECT_THROW(drop_uninformative(ds, "nope"), InvalidArgument);
}

TEST(Profile, CountsAndMoments) {
    Matrix X(4, 1);
    X.data = {1, 2, 3, 4};
    const DatasetProfile p = profile(make_dataset(X, {1, 0, 0, 0}));
    EXPECT_EQ(p.n_pos + p.n_neg, p.n_rows);
    EXPECT_DOUBLE_EQ(p.fraud_fraction, 0.25);
    EXPECT_DOUBLE_EQ(p.columns[0].mean, 2.5);
    EXPECT_DOUBLE_EQ(p.columns[0].std, std::sqrt(1.25));
    EXPECT_EQ(p.columns[0].n_distinct, 4u);
    const auto j = to_json(p);
    EXPECT_DOUBLE_EQ(j.at("fraud_fraction").get<double>(), 0.25);
}

namespace {
Dataset labelled(std::size_t n, std::size_t n_pos) {
    Matrix X(n, 1);
    std::vector<int> y(n, 0);
    for (std::size_t i = 0; i < n; ++i) X(i, 0) = static_cast<double>(i);
    for (std::size_t i = 0; i < n_pos; ++i) y[i * (n / n_pos)] = 1;
    return make_dataset(X, y);
}
}  // namespace

TEST(Subsample, ProportionalCount) {
    const Dataset ds = labelled(100, 50);
    const Dataset s = subsample(ds, 10, true, 3);
    EXPECT_EQ(s.n_rows(), 10u);
    EXPECT_EQ(s.n_pos(), 5u);
}

TEST(Subsample, IdentityAtFullSize) {
    const Dataset ds = labelled(100, 10);
    const Dataset s = subsample(ds, 100, true, 3);
    EXPECT_EQ(s.features, ds.features);  // sorted selection keeps order
    EXPECT_EQ(s.labels, ds.labels);
}

TEST(Subsample, Deterministic) {
    const Dataset ds = labelled(1000, 100);
    EXPECT_EQ(subsample(ds, 300, true, 9).row_ids, subsample(ds, 300, true, 9).row_ids);
    EXPECT_NE(subsample(ds, 300, true, 9).row_ids, subsample(ds, 300, true, 10).row_ids);
    EXPECT_THROW(subsample(ds, 1001, true, 9), InvalidArgument);
}

TEST(Subsample, TallDataCounts) {
    // 5.96% of a large table: proportional draw floors, explicit counts honored.
    const std::size_t n = 1'000'000, pos = 59'600;
    Matrix X(n, 1);
    std::vector<int> y(n, 0);
    for (std::size_t i = 0; i < pos; ++i) y[i * 16] = 1;
    const Dataset ds = make_dataset(std::move(X), std::move(y));
    const Dataset prop = subsample(ds, 500'000, true, 1);
    EXPECT_EQ(prop.n_pos(), 29'800u);
    const Dataset explicit_counts = subsample_counts(ds, 28'000, 472'000, 1);
    EXPECT_EQ(explicit_counts.n_rows(), 500'000u);
    EXPECT_DOUBLE_EQ(profile(explicit_counts).fraud_fraction, 0.056);
}

// --- config grammar ---------------------------------------------------------

TEST(Config, ParseAndTypedAccess) {
    const Config c = Config::parse(
        "# comment\n top = 1\n[a]\nx = 2.5\nlist = 1, 2 ,3\nflag = yes\n; other comment\n[b c]\nname with space = v w\n");
    EXPECT_EQ(c.get("", "top"), "1");
    EXPECT_DOUBLE_EQ(c.get_double("a", "x"), 2.5);
    EXPECT_EQ(c.get_double_list("a", "list", {}), (std::vector<double>{1, 2, 3}));
    EXPECT_TRUE(c.get_bool("a", "flag", false));
    EXPECT_EQ(c.get("b c", "name with space"), "v w");
    EXPECT_EQ(c.get_size("a", "missing", 7u), 7u);
}

TEST(Config, Errors) {
    EXPECT_THROW(Config::parse("[a\n"), InvalidArgument);
    EXPECT_THROW(Config::parse("novalue\n"), InvalidArgument);
    EXPECT_THROW(Config::parse("[a]\nx=1\nx=2\n"), InvalidArgument);
    const Config c = Config::parse("[a]\nx = abc\nn = -1\n");
    EXPECT_THROW(c.get_double("a", "x"), InvalidArgument);
    EXPECT_THROW(c.get_size("a", "n", 0), InvalidArgument);
    EXPECT_THROW(c.get("a", "missing"), InvalidArgument);
    EXPECT_THROW(c.get_bool("a", "x", false), InvalidArgument);
}

TEST(Config, OverridesWinAndUnusedKeysReported) {
    Config c = Config::parse("[a]\nx = 1\ntypo = 2\n");
    c.apply_override("a.x=5");
    c.apply_override("b.y = hello");
    c.apply_override("data.ecd.path=cc.csv");
    EXPECT_EQ(c.get("a", "x"), "5");
    EXPECT_EQ(c.get("data.ecd", "path"), "cc.csv");
    EXPECT_EQ(c.get("b", "y"), "hello");
    EXPECT_EQ(c.unused_keys(), (std::vector<std::string>{"a.typo"}));
    EXPECT_THROW(c.apply_override("nonsense"), InvalidArgument);
}

TEST(Config, DumpRoundTrips) {
    const Config c = Config::parse("[z]\nb = 2\na = 1\n[a]\nk = v\n");
    EXPECT_EQ(Config::parse(c.dump()), c);
    EXPECT_EQ(c.dump(), "[a]\nk = v\n\n[z]\na = 1\nb = 2\n");
}

TEST(Schema, DefaultsAndUndeclaredColumns) {
    const Config cfg = Config::parse("[defaults]\nkind = numeric\n[columns]\ny = label\n");
    const auto s = resolve_schema(cfg, {"p", "q", "y"});
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[2].kind, ColumnKind::label);
    EXPECT_THROW(resolve_schema(Config::parse("[columns]\ny = label\n"), {"p", "y"}), InvalidArgument);
    EXPECT_THROW(resolve_schema(Config::parse("[columns]\nzz = numeric\ny = label\n"), {"y"}), InvalidArgument);
}

TEST(Schema, ShippedSchemaFilesParse) {
    for (const char* f : {"ecd", "scd", "tcd"})
        EXPECT_NO_THROW(Config::load(testsupport::source_path(std::string("data/schemas/") + f + ".schema"))) << f;
}
