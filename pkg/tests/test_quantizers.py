import numpy as np
import pytest

from egvq import (
    CodeFrame,
    Codebook,
    FeatureMatrix,
    GroupPartition,
    QuantizerSpec,
    TrainConfig,
    TrainedQuantizer,
    decode,
    encode,
    nmse,
    partial_decode,
    quantize,
    train_quantizer,
)
from egvq.core import FormatError, SpecError
from egvq.quantizers import encode_with_trace, read_codebook, write_codebook

from conftest import exact_profile_features
from egvq import compute_channel_stats
from oracles import greedy_chain


def random_quantizer(rng, partition, depth, n, zero_first=False):
    codebooks = []
    for start, end in partition.groups:
        row = []
        for s in range(depth):
            cw = rng.normal(size=(n, end - start)) * 0.7**s
            if zero_first:
                cw[0] = 0.0
            row.append(Codebook(cw))
        codebooks.append(row)
    spec = QuantizerSpec(partition.num_groups, depth, n, partition)
    return TrainedQuantizer(spec, partition, codebooks)


class TestTrainQuantizer:
    def test_single_group_is_plain_rvq(self, small_corpus):
        cfg = TrainConfig(max_iterations=10, seed=9)
        q = train_quantizer(small_corpus, QuantizerSpec(1, 4, 8, "even"), cfg)
        assert q.partition.groups == [(0, small_corpus.num_channels)]
        # rebuild the residual chain by hand from the same per-stage seeds
        from egvq.vq import train_codebook, nearest_codewords
        seeds = np.random.SeedSequence(9).spawn(4)
        recon = np.zeros_like(small_corpus.values)
        for s in range(4):
            seed = int(seeds[s].generate_state(1, np.uint64)[0])
            cb = train_codebook(small_corpus.values - recon, 8, cfg.with_seed(seed))
            np.testing.assert_array_equal(cb.codewords, q.codebooks[0][s].codewords)
            recon = recon + cb.codewords[nearest_codewords(cb.codewords, small_corpus.values - recon)[0]]

    def test_entropy_guided_partition(self):
        feats = exact_profile_features([4, 1, 1, 1, 1])
        assert compute_channel_stats(feats).variances.tolist() == [4, 1, 1, 1, 1]
        q = train_quantizer(feats, QuantizerSpec(2, 2, 4, "entropy-guided"), TrainConfig(max_iterations=5))
        assert q.partition.groups == [(0, 1), (1, 5)]
        assert [cb.dim for cb in q.all_codebooks()] == [1, 1, 4, 4]

    def test_even_partition_512(self, rng):
        feats = FeatureMatrix(rng.normal(size=(8, 512)))
        q = train_quantizer(feats, QuantizerSpec(2, 1, 2, "even"), TrainConfig(max_iterations=2))
        assert q.partition.groups == [(0, 256), (256, 512)]

    def test_explicit_partition(self, small_corpus):
        part = GroupPartition(12, (5,))
        q = train_quantizer(small_corpus, QuantizerSpec(2, 1, 4, part), TrainConfig(max_iterations=3))
        assert q.partition == part

    def test_partition_mismatch(self, small_corpus):
        with pytest.raises(SpecError):
            train_quantizer(small_corpus, QuantizerSpec(2, 1, 4, GroupPartition(10, (5,))))

    def test_deterministic(self, small_corpus):
        spec = QuantizerSpec(2, 2, 8, "entropy-guided")
        a = train_quantizer(small_corpus, spec, TrainConfig(max_iterations=5, seed=1))
        b = train_quantizer(small_corpus, spec, TrainConfig(max_iterations=5, seed=1))
        for x, y in zip(a.all_codebooks(), b.all_codebooks()):
            np.testing.assert_array_equal(x.codewords, y.codewords)


class TestEncodeDecode:
    def test_base_case_matches_vq(self, rng):
        q = random_quantizer(rng, GroupPartition(6), 1, 16)
        x = FeatureMatrix(rng.normal(size=(100, 6)))
        codes = encode(q, x)
        idx, quantized = quantize(Codebook(q.codebooks[0][0].codewords), x.values)
        np.testing.assert_array_equal(codes.indices[:, 0], idx)
        np.testing.assert_array_equal(decode(q, codes).values, quantized)

    def test_matches_naive_greedy_chain(self, rng):
        part = GroupPartition(10, (4,))
        q = random_quantizer(rng, part, 2, 32)
        x = rng.normal(size=(10, 10))
        codes = encode(q, FeatureMatrix(x))
        for t in range(10):
            assert codes.indices[t].tolist() == greedy_chain(q.codebooks, part, x[t])

    def test_trained_matches_naive_greedy_chain(self, trained_2x2, small_corpus):
        codes = encode(trained_2x2, small_corpus.take_frames(slice(0, 10)))
        for t in range(10):
            expected = greedy_chain(trained_2x2.codebooks, trained_2x2.partition, small_corpus.values[t])
            assert codes.indices[t].tolist() == expected

    def test_decode_is_sum_of_codewords(self, trained_2x2, small_corpus):
        codes = encode(trained_2x2, small_corpus)
        recon = decode(trained_2x2, codes).values
        for g, (a, b) in enumerate(trained_2x2.partition.groups):
            expected = sum(trained_2x2.codebooks[g][s].codewords[codes.column(g, s)] for s in range(2))
            np.testing.assert_array_equal(recon[:, a:b], expected)

    def test_fixed_point(self, rng):
        part = GroupPartition(4, (2,))
        q = random_quantizer(rng, part, 2, 8)
        # frames that are the sum of stage-0 codeword 3 and a stage-1 codeword
        x = np.empty((1, 4))
        for g, (a, b) in enumerate(part.groups):
            q.codebooks[g][1] = Codebook(np.vstack([np.zeros(b - a), q.codebooks[g][1].codewords[1:]]))
            x[0, a:b] = q.codebooks[g][0].codewords[3]
        recon = decode(q, encode(q, FeatureMatrix(x)))
        np.testing.assert_array_equal(recon.values, x)

    def test_zero_codebooks(self, rng):
        part = GroupPartition(5, (2,))
        codebooks = [[Codebook(np.zeros((4, b - a))) for _ in range(3)] for a, b in part.groups]
        q = TrainedQuantizer(QuantizerSpec(2, 3, 4, part), part, codebooks)
        recon = decode(q, encode(q, FeatureMatrix(rng.normal(size=(20, 5)))))
        assert np.all(recon.values == 0.0)

    def test_roundtrip_nmse_cross_check(self, trained_2x2, small_corpus):
        from egvq import nmse_report
        recon = decode(trained_2x2, encode(trained_2x2, small_corpus))
        assert nmse(small_corpus, recon) == nmse_report(trained_2x2, small_corpus).total

    def test_channel_mismatch(self, trained_2x2, rng):
        with pytest.raises(ValueError):
            encode(trained_2x2, FeatureMatrix(rng.normal(size=(3, 5))))

    def test_index_out_of_range(self, trained_2x2):
        codes = CodeFrame(np.full((2, 4), 16), 2, 2)
        with pytest.raises(ValueError, match="out of range"):
            decode(trained_2x2, codes)


class TestPartialDecode:
    def test_full_depth_is_decode(self, trained_2x2, small_corpus):
        codes = encode(trained_2x2, small_corpus)
        np.testing.assert_array_equal(partial_decode(trained_2x2, codes, 2).values, decode(trained_2x2, codes).values)

    def test_depth_one_single_group(self, rng):
        q = random_quantizer(rng, GroupPartition(3), 3, 8)
        x = FeatureMatrix(rng.normal(size=(50, 3)))
        codes = encode(q, x)
        idx, quantized = quantize(Codebook(q.codebooks[0][0].codewords), x.values)
        np.testing.assert_array_equal(partial_decode(q, codes, 1).values, quantized)

    @pytest.mark.parametrize("depth", [0, 3])
    def test_depth_out_of_range(self, trained_2x2, small_corpus, depth):
        codes = encode(trained_2x2, small_corpus.take_frames(slice(0, 4)))
        with pytest.raises(ValueError):
            partial_decode(trained_2x2, codes, depth)


class TestInvariants:
    def test_telescoping_exact(self, trained_2x2, small_corpus):
        codes, trace = encode_with_trace(trained_2x2, small_corpus)
        x = small_corpus.values
        for s in range(2):
            recon = partial_decode(trained_2x2, codes, s + 1).values
            for g, (a, b) in enumerate(trained_2x2.partition.groups):
                assert trace.group_residual_energy[g, s] == float(np.sum((x[:, a:b] - recon[:, a:b]) ** 2))
        final = decode(trained_2x2, codes).values
        assert trace.residual_energy[-1] == pytest.approx(float(np.sum((x - final) ** 2)), rel=1e-13)

    def test_g1_equivalent_to_rvq(self, rng):
        rvq_books = [Codebook(rng.normal(size=(16, 7)) * 0.5**s) for s in range(4)]
        part = GroupPartition(7)
        q = TrainedQuantizer(QuantizerSpec(1, 4, 16, part), part, [rvq_books])
        x = rng.normal(size=(100, 7))
        # standalone residual chain
        recon = np.zeros_like(x)
        idx = []
        for cb in rvq_books:
            i, _ = quantize(cb, x - recon)
            recon = recon + cb.codewords[i]
            idx.append(i)
        codes = encode(q, FeatureMatrix(x))
        np.testing.assert_array_equal(codes.indices, np.stack(idx, axis=1))
        np.testing.assert_array_equal(decode(q, codes).values, recon)

    def test_monotone_with_zero_codewords(self, rng):
        part = GroupPartition(9, (3, 5))
        q = random_quantizer(rng, part, 4, 16, zero_first=True)
        x = FeatureMatrix(rng.normal(size=(300, 9)))
        codes = encode(q, x)
        errs = [nmse(x, partial_decode(q, codes, s)) for s in range(1, 5)]
        assert all(b <= a for a, b in zip(errs, errs[1:]))
        per_frame = [np.sum((x.values - partial_decode(q, codes, s).values) ** 2, axis=1) for s in range(1, 5)]
        assert all(np.all(b <= a) for a, b in zip(per_frame, per_frame[1:]))

    def test_group_order_irrelevant(self, trained_2x2, small_corpus):
        a, _ = encode_with_trace(trained_2x2, small_corpus, group_order=[0, 1])
        b, _ = encode_with_trace(trained_2x2, small_corpus, group_order=[1, 0])
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_centering_roundtrip(self, trained_centered):
        feats, q = trained_centered
        assert q.means is not None
        codes, trace = encode_with_trace(q, feats)
        recon = decode(q, codes)
        assert nmse(feats, recon) == pytest.approx(trace.residual_energy[-1] / trace.reference_energy, rel=1e-12)


class TestSerialization:
    def test_codebook_file(self, tmp_path, rng):
        cb = Codebook(rng.normal(size=(8, 3)).astype(np.float32))
        path = tmp_path / "a.cb"
        write_codebook(cb, path)
        data = path.read_bytes()
        assert data[:8] == b"EGVQCB1\x00"
        assert int.from_bytes(data[8:12], "little") == 8
        assert int.from_bytes(data[12:16], "little") == 3
        assert len(data) == 16 + 8 * 3 * 4
        np.testing.assert_array_equal(read_codebook(path).codewords, cb.codewords)

    def test_codebook_bad_magic(self, tmp_path):
        path = tmp_path / "bad.cb"
        path.write_bytes(b"NOTACB1\x00" + bytes(8))
        with pytest.raises(FormatError):
            read_codebook(path)

    def test_codebook_truncated(self, tmp_path, rng):
        path = tmp_path / "t.cb"
        write_codebook(Codebook(rng.normal(size=(4, 2))), path)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(FormatError):
            read_codebook(path)

    def test_directory_roundtrip(self, tmp_path, trained_2x2, small_corpus):
        out = trained_2x2.save(tmp_path / "q")
        names = sorted(p.name for p in out.iterdir())
        assert names == ["g0_s0.cb", "g0_s1.cb", "g1_s0.cb", "g1_s1.cb", "partition.json", "spec.json"]
        q2 = TrainedQuantizer.load(out)
        assert q2.spec == trained_2x2.spec
        np.testing.assert_array_equal(encode(q2, small_corpus).indices, encode(trained_2x2, small_corpus).indices)
        np.testing.assert_array_equal(decode(q2, encode(q2, small_corpus)).values,
                                      decode(trained_2x2, encode(trained_2x2, small_corpus)).values)

    def test_centered_directory_roundtrip(self, tmp_path, trained_centered):
        feats, q = trained_centered
        q2 = TrainedQuantizer.load(q.save(tmp_path / "c"))
        np.testing.assert_array_equal(q2.means, q.means)
        np.testing.assert_array_equal(decode(q2, encode(q2, feats)).values, decode(q, encode(q, feats)).values)
