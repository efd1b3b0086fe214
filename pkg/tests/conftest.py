import numpy as np
import pandas as pd
import pytest


def write_csv(path, header, rows):
    lines = [header] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


APC_HEADER = ("route_id,direction,alternative,trip_key,departure_time,weekday,"
              "stop_code,stop_sequence,boardings,alightings,continuing")


def apc_row(route="r1", direction="0", alt="0", trip="t1",
            ts="2023-01-02T08:00:00", weekday="monday", stop="A", seq=1,
            board=1, alight=0, cont=1):
    return [route, direction, alt, trip, ts, weekday, stop, seq, board, alight, cont]


@pytest.fixture
def tiny_apc(tmp_path):
    rows = [
        apc_row(trip="t1", stop="A", seq=1, board=3, alight=0, cont=3),
        apc_row(trip="t1", stop="B", seq=2, ts="2023-01-02T08:02:00", board=1,
                alight=1, cont=3),
        apc_row(trip="t1", stop="C", seq=3, ts="2023-01-02T08:04:00", board=0,
                alight=3, cont=0),
    ]
    return write_csv(tmp_path / "apc.csv", APC_HEADER, rows)


def events_frame(rows):
    """Rows of apc_row() lists -> typed events DataFrame (as load_apc returns)."""
    df = pd.DataFrame(rows, columns=APC_HEADER.split(","))
    df["departure_time"] = pd.to_datetime(df["departure_time"])
    for col in ("stop_sequence", "boardings", "alightings", "continuing"):
        df[col] = df[col].astype(np.int64)
    return df


def simple_trip(trip="t1", stops=("A", "B", "C"), boards=(3, 1, 0),
                alights=(0, 1, 3), conts=(3, 3, 0), route="r1",
                start="2023-01-02T08:00:00", weekday="monday"):
    t0 = pd.Timestamp(start)
    rows = []
    for i, stop in enumerate(stops):
        ts = (t0 + pd.Timedelta(minutes=2 * i)).strftime("%Y-%m-%dT%H:%M:%S")
        rows.append(apc_row(route=route, trip=trip, ts=ts, weekday=weekday,
                            stop=stop, seq=i + 1, board=boards[i],
                            alight=alights[i], cont=conts[i]))
    return rows
