"""
Tests for data file parsing, writing and synthetic fixtures.
"""
import itertools

import numpy as np
import pytest

from ais_engine.affinity import pearson
from ais_engine.encoding import Label, Protocol, parse_packet
from ais_engine.errors import (
    DataFileError,
    DuplicateRowError,
    InputError,
    InvalidRecordError,
    ParameterError,
    ScoreRangeError,
    UnknownLabelError,
    WildcardInRecordError,
)
from ais_engine.ingest import (
    RatingsTable,
    TrafficLog,
    TrafficProfile,
    load_bit_patterns,
    load_ratings,
    load_records,
    load_traffic,
    save_ratings,
    save_traffic,
    synth_ratings,
    synth_traffic,
)

TRAFFIC_HEADER = "protocol,src_ip,src_port,dst_ip,dst_port"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadRatings:
    """Ratings CSV parsing and validation."""

    def test_loads_profiles(self, ratings_csv):
        table = load_ratings(ratings_csv)
        assert len(table) == 15
        assert table.users == ["u1", "u2", "u3", "u4"]
        assert dict(table.profile("u2").votes) == {"i1": 4, "i2": 5, "i3": 2, "i4": 5}

    def test_unknown_user(self, ratings_csv):
        with pytest.raises(InputError, match="Unknown user"):
            load_ratings(ratings_csv).profile("nobody")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFileError, match="not found"):
            load_ratings(tmp_path / "missing.csv")

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataFileError):
            load_ratings(write(tmp_path, "r.csv", ""))

    def test_header_only(self, tmp_path):
        with pytest.raises(DataFileError, match="no ratings"):
            load_ratings(write(tmp_path, "r.csv", "user_id,item_id,rating\n"))

    def test_wrong_header(self, tmp_path):
        with pytest.raises(DataFileError) as info:
            load_ratings(write(tmp_path, "r.csv", "user,item,score\nu1,i1,3\n"))
        assert info.value.row == 1

    def test_real_valued_rating_names_row(self, tmp_path):
        path = write(tmp_path, "r.csv", "user_id,item_id,rating\nu1,i1,3\nu1,i2,3.5\n")
        with pytest.raises(DataFileError, match="row 3") as info:
            load_ratings(path)
        assert info.value.row == 3

    def test_out_of_range_rating(self, tmp_path):
        path = write(tmp_path, "r.csv", "user_id,item_id,rating\nu1,i1,6\n")
        with pytest.raises(ScoreRangeError) as info:
            load_ratings(path)
        assert info.value.row == 2

    def test_duplicate_pair(self, tmp_path):
        path = write(tmp_path, "r.csv", "user_id,item_id,rating\nu1,i1,3\nu2,i1,4\nu1,i1,5\n")
        with pytest.raises(DuplicateRowError) as info:
            load_ratings(path)
        assert info.value.row == 4

    def test_missing_field(self, tmp_path):
        path = write(tmp_path, "r.csv", "user_id,item_id,rating\nu1,,3\n")
        with pytest.raises(DataFileError, match="Missing"):
            load_ratings(path)

    def test_save_and_reload(self, ratings_csv, tmp_path):
        table = load_ratings(ratings_csv)
        saved = save_ratings(table, tmp_path / "out" / "ratings.csv")
        assert load_ratings(saved) == table
        assert saved.read_text(encoding="utf-8") == ratings_csv.read_text(encoding="utf-8")

    def test_from_profiles(self, movie_profiles):
        table = RatingsTable.from_profiles(movie_profiles)
        assert table.users == [p.user_id for p in movie_profiles]
        assert dict(table.profile("carol").votes) == dict(movie_profiles[2].votes)


class TestLoadTraffic:
    """Traffic and bit-pattern streams."""

    def test_labeled_traffic(self, tmp_path):
        path = write(
            tmp_path,
            "t.csv",
            f"{TRAFFIC_HEADER},label\n"
            "tcp,113.112.255.254,4912,108.200.111.12,25,self\n"
            "udp,10.0.0.1,53,108.200.111.12,53,nonself\n",
        )
        log = load_traffic(path)
        assert len(log) == 2 and log.labeled
        assert log.labels == (Label.SELF, Label.NONSELF)
        assert log.records[1].protocol is Protocol.UDP

    def test_unlabeled_traffic(self, tmp_path):
        path = write(tmp_path, "t.csv", f"{TRAFFIC_HEADER}\ntcp,1.2.3.4,80,5.6.7.8,443\n")
        log = load_traffic(path)
        assert not log.has_labels and log.labels == (None,)

    def test_wildcard_in_record(self, tmp_path):
        path = write(
            tmp_path, "t.csv", f"{TRAFFIC_HEADER}\ntcp,1.2.3.4,80,5.6.7.8,443\ntcp,*,80,5.6.7.8,443\n"
        )
        with pytest.raises(WildcardInRecordError) as info:
            load_traffic(path)
        assert info.value.row == 3
        assert isinstance(info.value, InvalidRecordError)

    def test_any_protocol_in_record(self, tmp_path):
        path = write(tmp_path, "t.csv", f"{TRAFFIC_HEADER}\nany,1.2.3.4,80,5.6.7.8,443\n")
        with pytest.raises(WildcardInRecordError):
            load_traffic(path)

    def test_malformed_address_names_row(self, tmp_path):
        path = write(tmp_path, "t.csv", f"{TRAFFIC_HEADER}\ntcp,1.2.3,80,5.6.7.8,443\n")
        with pytest.raises(DataFileError, match="row 2"):
            load_traffic(path)

    def test_unknown_label(self, tmp_path):
        path = write(tmp_path, "t.csv", f"{TRAFFIC_HEADER},label\ntcp,1.2.3.4,80,5.6.7.8,443,evil\n")
        with pytest.raises(UnknownLabelError):
            load_traffic(path)

    def test_bad_header(self, tmp_path):
        with pytest.raises(DataFileError):
            load_traffic(write(tmp_path, "t.csv", "proto,src\ntcp,1.2.3.4\n"))

    def test_bit_patterns(self, tmp_path):
        path = write(tmp_path, "p.csv", "pattern,label\n00101,self\n11100,nonself\n")
        log = load_bit_patterns(path)
        assert [r.render() for r in log.records] == ["00101", "11100"]
        assert log.labeled

    def test_bit_patterns_keep_leading_zeros(self, tmp_path):
        log = load_records(write(tmp_path, "p.csv", "pattern\n0001\n"))
        assert log.records[0].render() == "0001"

    def test_bit_pattern_length_mismatch(self, tmp_path):
        with pytest.raises(DataFileError) as info:
            load_bit_patterns(write(tmp_path, "p.csv", "pattern\n0101\n011\n"))
        assert info.value.row == 3

    def test_load_records_dispatches_on_header(self, tmp_path):
        traffic = write(tmp_path, "t.csv", f"{TRAFFIC_HEADER}\ntcp,1.2.3.4,80,5.6.7.8,443\n")
        assert load_records(traffic).records[0].dst_port == 443

    def test_save_and_reload(self, tmp_path):
        log = synth_traffic(TrafficProfile(), 5, 3, seed=2)
        path = save_traffic(log, tmp_path / "traffic.csv")
        assert load_traffic(path) == log

    def test_log_length_check(self, smtp_record):
        with pytest.raises(InputError):
            TrafficLog((smtp_record,), (Label.SELF, Label.NONSELF))


class TestSynthRatings:
    def test_seeded(self):
        assert synth_ratings(30, 20, 0.3, seed=4) == synth_ratings(30, 20, 0.3, seed=4)

    def test_every_user_votes(self):
        table = synth_ratings(50, 10, 0.05, seed=1)
        assert len(table.users) == 50
        assert all(len(p.votes) >= 1 for p in table.profiles.values())

    def test_scores_in_range(self):
        frame = synth_ratings(40, 30, 0.5, seed=2).frame
        assert frame["rating"].between(0, 5).all()

    def test_full_density(self):
        table = synth_ratings(4, 6, 1.0, seed=0)
        assert len(table) == 24

    def test_parameters_validated(self):
        with pytest.raises(ParameterError):
            synth_ratings(10, 10, 0.0, seed=0)
        with pytest.raises(ParameterError):
            synth_ratings(0, 10, 0.5, seed=0)

    @pytest.mark.parametrize("seed", range(5))
    def test_mirrored_groups_anticorrelate(self, seed):
        """Two taste groups: users correlate positively within a group and negatively across."""
        table = synth_ratings(40, 30, 0.6, seed=seed)
        profiles = [table.profile(u) for u in table.users]
        within, across = [], []
        for i, j in itertools.combinations(range(len(profiles)), 2):
            (within if i % 2 == j % 2 else across).append(pearson(profiles[i], profiles[j]))
        assert np.mean(within) > 0
        assert np.mean(across) < 0


class TestSynthTraffic:
    """Labeled traffic around a service profile."""

    def test_labels_follow_profile(self):
        profile = TrafficProfile()
        log = synth_traffic(profile, 200, 50, seed=11)
        assert log.labels.count(Label.SELF) == 200
        for record, label in zip(log.records, log.labels):
            assert profile.allows(record) == (label is Label.SELF)
            assert not record.has_wildcards

    def test_profile_allows_sample_record(self, smtp_record):
        assert TrafficProfile().allows(smtp_record)
        assert not TrafficProfile().allows(parse_packet("tcp,113.112.0.1,4000,108.200.111.12,22"))

    def test_needs_rows(self):
        with pytest.raises(ParameterError):
            synth_traffic(TrafficProfile(), 0, 0, seed=0)

    def test_no_attacks_means_all_self(self):
        log = synth_traffic(TrafficProfile(), 60, 0, seed=3)
        assert len(log) == 60
        assert set(log.labels) == {Label.SELF}

    def test_seeded_file_is_byte_identical(self, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path in paths:
            save_traffic(synth_traffic(TrafficProfile(), 30, 10, seed=5), path)
        assert paths[0].read_bytes() == paths[1].read_bytes()
