import numpy as np
import pytest

from facerestore.gradcheck import grad_check_tensors
from facerestore.graph import (
    AdjacencyMatrix, PatchGraphConv, PatchSplitSpec, RegionRelationBlock,
    build_adjacency, default_au_patch_pairs, igcn_forward, load_matrix_txt,
    make_region_block, merge_patches, normalize_adjacency, rrmb_forward,
    save_matrix_txt, spectral_radius, split_patches,
)
from facerestore.tensor import Tensor, conv2d, relu


def t64(a):
    return Tensor(np.asarray(a, dtype=np.float64))


class TestSplitMerge:
    def test_k1_is_identity(self):
        x = t64(np.random.default_rng(0).uniform(size=(2, 3, 4, 4)))
        spec = PatchSplitSpec(1, 4, 4)
        patches = split_patches(x, spec)
        assert patches.shape == (1, 2, 3, 4, 4)
        assert np.array_equal(patches.data[0], x.data)
        assert np.array_equal(merge_patches(patches, spec).data, x.data)

    def test_k2_block_placement(self):
        img = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        spec = PatchSplitSpec(2, 4, 4)
        patches = split_patches(Tensor(img), spec).data
        assert np.array_equal(patches[0, 0, 0], img[0, 0, :2, :2])  # top-left
        assert np.array_equal(patches[1, 0, 0], img[0, 0, :2, 2:])  # top-right
        assert np.array_equal(patches[2, 0, 0], img[0, 0, 2:, :2])  # bottom-left
        assert np.array_equal(patches[3, 0, 0], img[0, 0, 2:, 2:])  # bottom-right

    @pytest.mark.parametrize("k", [1, 2, 4, 8])
    def test_roundtrip_bit_exact(self, k):
        rng = np.random.default_rng(k)
        x = rng.uniform(-1, 1, (2, 3, 16, 16))
        spec = PatchSplitSpec(k, 16, 16)
        back = merge_patches(split_patches(Tensor(x), spec), spec)
        assert np.array_equal(back.data, x)

    def test_non_divisible_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            PatchSplitSpec(3, 16, 16)
        spec = PatchSplitSpec(2, 4, 4)
        with pytest.raises(ValueError, match="match"):
            split_patches(t64(np.zeros((1, 1, 6, 6))), spec)

    def test_wrong_patch_count_rejected(self):
        spec = PatchSplitSpec(2, 4, 4)
        with pytest.raises(ValueError, match="patches"):
            merge_patches(t64(np.zeros((3, 1, 1, 2, 2))), spec)

    def test_split_is_differentiable(self):
        x = Tensor(np.random.default_rng(5).uniform(size=(1, 2, 4, 4)), requires_grad=True)
        spec = PatchSplitSpec(2, 4, 4)
        report = grad_check_tensors(lambda: split_patches(x, spec), [x], op_name="split")
        assert report.passed


class TestNormalizeAdjacency:
    def test_single_node(self):
        assert np.allclose(normalize_adjacency(np.array([[0.0]])), [[1.0]], atol=1e-12)

    def test_two_node_half_matrix(self):
        got = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(got, [[0.5, 0.5], [0.5, 0.5]], atol=1e-12)

    def test_path_graph_fixture(self):
        # path 0-1-2: degrees with self-loops are (2,3,2); entry (0,1) = 1/sqrt(6)
        raw = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        got = normalize_adjacency(raw)
        assert abs(got[0, 1] - 1.0 / np.sqrt(6.0)) < 1e-12
        assert abs(got[0, 1] - 0.4082482904638631) < 1e-12
        assert np.allclose(got, got.T, atol=1e-15)

    def test_all_zero_raw_yields_identity(self):
        assert np.allclose(normalize_adjacency(np.zeros((4, 4))), np.eye(4), atol=1e-15)

    def test_asymmetric_rejected(self):
        raw = np.zeros((2, 2))
        raw[0, 1] = 1.0
        with pytest.raises(ValueError, match="symmetric"):
            normalize_adjacency(raw)

    def test_spectral_radius_bound(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            p = 9
            raw = (rng.uniform(size=(p, p)) > 0.6).astype(float)
            raw = np.triu(raw, 1)
            raw = raw + raw.T
            norm = normalize_adjacency(raw)
            assert spectral_radius(norm) <= 1.0 + 1e-6


class TestBuildAdjacency:
    def test_k1_single_node(self):
        adj = build_adjacency(PatchSplitSpec(1, 8, 8))
        assert np.array_equal(adj.raw, [[0.0]])
        assert np.allclose(adj.normalized, [[1.0]])

    def test_k2_symmetry_links(self):
        adj = build_adjacency(PatchSplitSpec(2, 8, 8), use_symmetry=True)
        expected = np.zeros((4, 4))
        expected[0, 1] = expected[1, 0] = 1.0
        expected[2, 3] = expected[3, 2] = 1.0
        assert np.array_equal(adj.raw, expected)

    def test_identical_patches_link_by_cosine(self):
        mean = np.tile(np.random.default_rng(2).uniform(0.2, 0.8, (3, 4, 4)), (1, 2, 2))
        # all four 2x2-grid patches identical -> cosine 1 everywhere
        adj = build_adjacency(PatchSplitSpec(2, 8, 8), mean_image=mean,
                              sim_threshold=1.0, use_symmetry=False)
        off_diag = adj.raw[~np.eye(4, dtype=bool)]
        assert np.all(off_diag == 1.0)

    def test_threshold_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="sim_threshold"):
            build_adjacency(PatchSplitSpec(2, 8, 8), mean_image=np.zeros((3, 8, 8)),
                            sim_threshold=1.5)

    def test_mean_image_required_with_threshold(self):
        with pytest.raises(ValueError, match="mean_image"):
            build_adjacency(PatchSplitSpec(2, 8, 8), sim_threshold=0.9)

    def test_au_pairs_added_and_validated(self):
        adj = build_adjacency(PatchSplitSpec(2, 8, 8), use_symmetry=False,
                              au_pairs=((0, 3),))
        assert adj.raw[0, 3] == 1.0 and adj.raw[3, 0] == 1.0
        with pytest.raises(ValueError, match="out of range"):
            build_adjacency(PatchSplitSpec(2, 8, 8), au_pairs=((0, 9),))

    def test_default_au_pairs_in_range(self):
        pairs = default_au_patch_pairs(8)
        assert pairs
        for i, j in pairs:
            assert 0 <= i < 64 and 0 <= j < 64 and i != j


class TestAdjacencyIO:
    def test_text_roundtrip(self, tmp_path):
        raw = np.zeros((3, 3))
        raw[0, 1] = raw[1, 0] = 1.0
        adj = AdjacencyMatrix(raw)
        path = tmp_path / "adj.txt"
        adj.to_text(path)
        again = AdjacencyMatrix.from_text(path)
        assert np.array_equal(again.raw, adj.raw)
        assert np.allclose(again.normalized, adj.normalized)

    def test_matrix_txt_precision(self, tmp_path):
        m = np.array([[0.1234567890123456, 1.0], [1.0, 0.0]])
        path = tmp_path / "m.txt"
        save_matrix_txt(path, m)
        assert np.array_equal(load_matrix_txt(path), m)


def _layer(k, side, cin, cout, seed=0, mode="conv", stride=1, ksize=3, adj=None, padding=None):
    spec = PatchSplitSpec(k, side, side)
    adj = adj if adj is not None else build_adjacency(spec)
    rng = np.random.default_rng(seed)
    return PatchGraphConv(spec, adj, cin, cout, ksize, mode=mode, stride=stride,
                          padding=padding, rng=rng, dtype=np.float64)


class TestPatchGraphConv:
    def test_1x1_split_equals_conv_relu_bit_exact(self):
        layer = _layer(1, 8, 3, 4, seed=1)
        x = t64(np.random.default_rng(3).uniform(-1, 1, (2, 3, 8, 8)))
        out = layer(x)
        ref = relu(conv2d(x, layer.weight, layer.bias, stride=1, padding=1))
        assert np.array_equal(out.data, ref.data)

    def test_identity_adjacency_is_patchwise_conv(self):
        spec = PatchSplitSpec(2, 8, 8)
        adj = AdjacencyMatrix(np.zeros((4, 4)))  # normalizes to identity
        layer = _layer(2, 8, 2, 2, seed=2, adj=adj)
        x = t64(np.random.default_rng(4).uniform(-1, 1, (1, 2, 8, 8)))
        out = layer(x)
        # compute each patch separately through conv+relu and reassemble
        patches = split_patches(x, spec)
        outs = []
        for p in range(4):
            xp = Tensor(patches.data[p])
            outs.append(relu(conv2d(xp, layer.weight, layer.bias, 1, 1)).data)
        ref = merge_patches(Tensor(np.stack(outs)), spec)
        assert np.allclose(out.data, ref.data, atol=1e-12)

    def test_uniform_two_patch_mixing_averages(self):
        # one row, two mirrored patches, adjacency [[.5,.5],[.5,.5]]
        spec = PatchSplitSpec(2, 4, 4)
        adj = build_adjacency(spec)  # symmetry links for k=2
        layer = _layer(2, 4, 1, 1, seed=5, adj=adj)
        x = t64(np.random.default_rng(6).uniform(-1, 1, (1, 1, 4, 4)))
        out = layer(x)
        patches = split_patches(x, spec)
        acts = [relu(conv2d(Tensor(patches.data[p]), layer.weight, layer.bias, 1, 1)).data
                for p in range(4)]
        # contraction oracle: out_i = sum_j A[i,j] act_j
        a = adj.normalized
        expect = [sum(a[i, j] * acts[j] for j in range(4)) for i in range(4)]
        ref = merge_patches(Tensor(np.stack(expect)), spec)
        assert np.allclose(out.data, ref.data, atol=1e-12)
        assert np.allclose(a[0, :2], [0.5, 0.5])

    def test_adjacency_dimension_mismatch_rejected(self):
        spec = PatchSplitSpec(2, 8, 8)
        wrong = AdjacencyMatrix(np.zeros((9, 9)))
        with pytest.raises(ValueError, match="patches"):
            PatchGraphConv(spec, wrong, 2, 2, 3)

    def test_deconv_mode_upsamples(self):
        layer = _layer(2, 8, 2, 3, seed=7, mode="deconv", stride=2, ksize=4, padding=1)
        x = t64(np.random.default_rng(8).uniform(-1, 1, (1, 2, 8, 8)))
        out = layer(x)
        assert out.shape == (1, 3, 16, 16)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        spec = PatchSplitSpec(2, 8, 8)
        raw = np.zeros((4, 4))
        raw[0, 1] = raw[1, 0] = 1.0
        raw[1, 2] = raw[2, 1] = 1.0
        adj = AdjacencyMatrix(raw)
        layer = _layer(2, 8, 2, 2, seed=12, adj=adj)
        x = t64(rng.uniform(-1, 1, (1, 2, 8, 8)))
        out = layer(x).data

        perm = np.array([2, 0, 3, 1])
        pmat = np.eye(4)[perm]
        adj_p = AdjacencyMatrix(pmat @ raw @ pmat.T)
        layer_p = _layer(2, 8, 2, 2, seed=12, adj=adj_p)
        # permute input patches, run, and un-permute the outputs
        patches = split_patches(x, spec).data
        x_p = merge_patches(Tensor(patches[perm]), spec)
        out_p = layer_p(x_p).data
        out_p_patches = split_patches(Tensor(out_p), spec).data
        undone = merge_patches(Tensor(out_p_patches[np.argsort(perm)]), spec).data
        assert np.allclose(undone, out, atol=1e-6)

    def test_mirror_consistency_with_symmetric_kernel(self):
        # symmetry-only adjacency + horizontally symmetric input + left-right
        # symmetric shared kernel -> horizontally symmetric output
        rng = np.random.default_rng(13)
        layer = _layer(2, 8, 1, 2, seed=14)
        w = layer.weight.data
        layer.weight.data = 0.5 * (w + w[:, :, :, ::-1])  # symmetrize kernel columns
        half = rng.uniform(-1, 1, (1, 1, 8, 4))
        x = np.concatenate([half, half[:, :, :, ::-1]], axis=3)
        out = layer(t64(x)).data
        assert np.max(np.abs(out - out[:, :, :, ::-1])) < 1e-5

    def test_gradcheck_inputs_weight_bias(self):
        for seed in range(3):
            layer = _layer(2, 4, 2, 2, seed=seed)
            x = Tensor(np.random.default_rng(seed + 20).uniform(-1, 1, (1, 2, 4, 4)),
                       requires_grad=True)
            report = grad_check_tensors(lambda: layer(x), [x, layer.weight, layer.bias],
                                        op_name="patch_graph_conv")
            assert report.passed, str(report)


class TestRegionRelationBlock:
    def _block(self, seed=0, side=8, cin=2, cout=2):
        rng = np.random.default_rng(seed)
        return make_region_block(side, side, cin, cout, 3, rng,
                                 lambda k: build_adjacency(PatchSplitSpec(k, side, side)),
                                 dtype=np.float64)

    def test_zero_weights_give_zero_output(self):
        block = self._block(seed=1)
        for p in block.parameters():
            p.data[:] = 0.0
        x = t64(np.random.default_rng(2).uniform(-1, 1, (1, 2, 8, 8)))
        assert np.array_equal(block(x).data, np.zeros((1, 2, 8, 8)))

    def test_two_branches_zeroed_leaves_remaining(self):
        block = self._block(seed=3)
        for p in block.branch_2x2.parameters() + block.branch_8x8.parameters():
            p.data[:] = 0.0
        x = t64(np.random.default_rng(4).uniform(-1, 1, (1, 2, 8, 8)))
        assert np.allclose(block(x).data, block.branch_1x1(x).data, atol=1e-15)

    def test_sum_matches_isolated_branches(self):
        block = self._block(seed=5)
        x = t64(np.random.default_rng(6).uniform(-1, 1, (2, 2, 8, 8)))
        expect = block.branch_1x1(x).data + block.branch_2x2(x).data + block.branch_8x8(x).data
        assert np.allclose(block(x).data, expect, atol=1e-12)

    def test_input_not_divisible_by_8_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            self._block(side=12)

    def test_mismatched_branches_rejected(self):
        side = 8
        rng = np.random.default_rng(7)
        mk = lambda k, cout: PatchGraphConv(
            PatchSplitSpec(k, side, side),
            build_adjacency(PatchSplitSpec(k, side, side)), 2, cout, 3, rng=rng)
        with pytest.raises(ValueError, match="share"):
            RegionRelationBlock(mk(1, 2), mk(2, 3), mk(8, 2))

    def test_gradcheck(self):
        block = self._block(seed=8, side=8)
        x = Tensor(np.random.default_rng(9).uniform(-1, 1, (1, 2, 8, 8)),
                   requires_grad=True)
        report = grad_check_tensors(lambda: block(x), [x] + block.parameters(),
                                    op_name="region_relation_block")
        assert report.passed, str(report)


def test_igcn_rrmb_function_aliases():
    layer = _layer(1, 8, 1, 1)
    x = t64(np.zeros((1, 1, 8, 8)))
    assert np.array_equal(igcn_forward(layer, x).data, layer(x).data)
    rng = np.random.default_rng(0)
    block = make_region_block(8, 8, 1, 1, 3, rng,
                              lambda k: build_adjacency(PatchSplitSpec(k, 8, 8)),
                              dtype=np.float64)
    assert np.array_equal(rrmb_forward(block, x).data, block(x).data)
