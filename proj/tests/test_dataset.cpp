#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"

using namespace sade;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
}

fs::path three_node_dir(const std::string& name) {
    const auto dir = testutil::temp_dir(name);
    write(dir / "edges.tsv", "0\t1\n");
    write(dir / "features.csv", "1,0\n0,1\n0.5,0.5\n");
    write(dir / "labels.txt", "0\n1\n1\n");
    write(dir / "splits" / "split_0.json", R"({"train":[0],"val":[1],"test":[2]})");
    return dir;
}

}  // namespace

TEST(LoadGraph, ThreeNodeFixture) {
    const auto ds = load_graph<double>(three_node_dir("three"));
    EXPECT_EQ(ds.graph.num_nodes(), 3u);
    EXPECT_EQ(ds.graph.num_edges(), 2u);
    EXPECT_TRUE(ds.graph.has_edge(0, 1));
    EXPECT_TRUE(ds.graph.has_edge(1, 0));
    EXPECT_EQ(ds.features.rows(), 3u);
    EXPECT_EQ(ds.features.cols(), 2u);
    EXPECT_EQ(ds.labels.num_classes, 2u);
    ASSERT_EQ(ds.splits.size(), 1u);
    EXPECT_EQ(ds.splits[0].test, std::vector<std::size_t>{2});
}

TEST(LoadGraph, RowCountMismatch) {
    const auto dir = testutil::temp_dir("mismatch");
    write(dir / "edges.tsv", "0 1\n");
    write(dir / "features.csv", "1\n2\n3\n4\n");
    write(dir / "labels.txt", "0\n1\n0\n1\n0\n");
    try {
        load_graph<double>(dir);
        FAIL() << "expected DatasetError";
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("row-count mismatch"), std::string::npos);
    }
}

TEST(LoadGraph, MissingFile) {
    const auto dir = testutil::temp_dir("missing");
    write(dir / "edges.tsv", "0 1\n");
    write(dir / "labels.txt", "0\n1\n");
    EXPECT_THROW(load_graph<double>(dir), DatasetError);
}

TEST(LoadGraph, IndexOutOfRange) {
    const auto dir = three_node_dir("range");
    write(dir / "edges.tsv", "0\t7\n");
    EXPECT_THROW(load_graph<double>(dir), DatasetError);
}

TEST(LoadGraph, DuplicatesAndCommentsAndBothDirections) {
    const auto dir = three_node_dir("dups");
    write(dir / "edges.tsv", "# header\n0\t1\n1\t0\n0\t1\n\n1 2\n");
    const auto ds = load_graph<double>(dir);
    EXPECT_EQ(ds.graph.num_edges(), 4u);
}

TEST(LoadGraph, RaggedAndNonFiniteFeatures) {
    auto dir = three_node_dir("ragged");
    write(dir / "features.csv", "1,0\n0\n0.5,0.5\n");
    EXPECT_THROW(load_graph<double>(dir), DatasetError);
    dir = three_node_dir("nan");
    write(dir / "features.csv", "1,0\nnan,1\n0.5,0.5\n");
    EXPECT_THROW(load_graph<double>(dir), DatasetError);
}

TEST(LoadGraph, BadSplitRejected) {
    const auto dir = three_node_dir("badsplit");
    write(dir / "splits" / "split_0.json", R"({"train":[0,1],"val":[1],"test":[2]})");
    EXPECT_THROW(load_graph<double>(dir), DatasetError);
}

TEST(LoadGraph, SplitsInNumericOrderAndOptional) {
    const auto dir = three_node_dir("order");
    write(dir / "splits" / "split_10.json", R"({"train":[2],"val":[1],"test":[0]})");
    write(dir / "splits" / "split_2.json", R"({"train":[1],"val":[2],"test":[0]})");
    const auto ds = load_graph<double>(dir);
    ASSERT_EQ(ds.splits.size(), 3u);
    EXPECT_EQ(ds.splits[1].train, std::vector<std::size_t>{1});
    EXPECT_EQ(ds.splits[2].train, std::vector<std::size_t>{2});
    fs::remove_all(dir / "splits");
    EXPECT_TRUE(load_graph<double>(dir).splits.empty());
}

TEST(LoadGraph, RoundTripIsIdempotent) {
    SyntheticSpec sp;
    sp.num_nodes = 120;
    sp.avg_degree = 4;
    auto ds = generate_synthetic<double>(sp);
    ds.splits = make_splits(120, {}, 2, 1);
    const auto a = testutil::temp_dir("rt_a");
    write_dataset(a, ds);
    const auto first = load_graph<double>(a);
    const auto b = testutil::temp_dir("rt_b");
    write_dataset(b, first);
    const auto second = load_graph<double>(b);
    EXPECT_TRUE(first.graph == ds.graph);
    EXPECT_TRUE(second.graph == first.graph);
    EXPECT_EQ(second.features, ds.features);
    EXPECT_EQ(second.labels.labels, ds.labels.labels);
    ASSERT_EQ(second.splits.size(), 2u);
    EXPECT_EQ(second.splits[1].val, ds.splits[1].val);
}
