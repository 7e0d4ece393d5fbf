#!/usr/bin/env python3
"""Regenerates the small CSV fixtures under tests/fixtures."""
import csv
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"

CIC2018 = [
    "Dst Port", "Protocol", "Timestamp", "Flow Duration", "Tot Fwd Pkts",
    "Tot Bwd Pkts", "TotLen Fwd Pkts", "TotLen Bwd Pkts", "Fwd Pkt Len Max",
    "Fwd Pkt Len Min", "Fwd Pkt Len Mean", "Fwd Pkt Len Std", "Bwd Pkt Len Max",
    "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std", "Flow Byts/s",
    "Flow Pkts/s", "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max", "Flow IAT Min",
    "Fwd IAT Tot", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Max", "Fwd IAT Min",
    "Bwd IAT Tot", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min",
    "Fwd PSH Flags", "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags",
    "Fwd Header Len", "Bwd Header Len", "Fwd Pkts/s", "Bwd Pkts/s", "Pkt Len Min",
    "Pkt Len Max", "Pkt Len Mean", "Pkt Len Std", "Pkt Len Var", "FIN Flag Cnt",
    "SYN Flag Cnt", "RST Flag Cnt", "PSH Flag Cnt", "ACK Flag Cnt", "URG Flag Cnt",
    "CWE Flag Count", "ECE Flag Cnt", "Down/Up Ratio", "Pkt Size Avg",
    "Fwd Seg Size Avg", "Bwd Seg Size Avg", "Fwd Byts/b Avg", "Fwd Pkts/b Avg",
    "Fwd Blk Rate Avg", "Bwd Byts/b Avg", "Bwd Pkts/b Avg", "Bwd Blk Rate Avg",
    "Subflow Fwd Pkts", "Subflow Fwd Byts", "Subflow Bwd Pkts", "Subflow Bwd Byts",
    "Init Fwd Win Byts", "Init Bwd Win Byts", "Fwd Act Data Pkts", "Fwd Seg Size Min",
    "Active Mean", "Active Std", "Active Max", "Active Min", "Idle Mean", "Idle Std",
    "Idle Max", "Idle Min", "Label"]

# CIC-IDS2017 "TrafficLabelling" spellings, same order, with the leading
# spaces those exports carry and a few extra identifier columns up front.
CIC2017 = [
    "Flow ID", " Source IP", " Source Port", " Destination IP",
    " Destination Port", " Protocol", " Timestamp", " Flow Duration",
    " Total Fwd Packets", " Total Backward Packets", "Total Length of Fwd Packets",
    " Total Length of Bwd Packets", " Fwd Packet Length Max", " Fwd Packet Length Min",
    " Fwd Packet Length Mean", " Fwd Packet Length Std", "Bwd Packet Length Max",
    " Bwd Packet Length Min", " Bwd Packet Length Mean", " Bwd Packet Length Std",
    "Flow Bytes/s", " Flow Packets/s", " Flow IAT Mean", " Flow IAT Std", " Flow IAT Max",
    " Flow IAT Min", "Fwd IAT Total", " Fwd IAT Mean", " Fwd IAT Std", " Fwd IAT Max",
    " Fwd IAT Min", "Bwd IAT Total", " Bwd IAT Mean", " Bwd IAT Std", " Bwd IAT Max",
    " Bwd IAT Min", "Fwd PSH Flags", " Bwd PSH Flags", " Fwd URG Flags", " Bwd URG Flags",
    " Fwd Header Length", " Bwd Header Length", "Fwd Packets/s", " Bwd Packets/s",
    " Min Packet Length", " Max Packet Length", " Packet Length Mean", " Packet Length Std",
    " Packet Length Variance", "FIN Flag Count", " SYN Flag Count", " RST Flag Count",
    " PSH Flag Count", " ACK Flag Count", " URG Flag Count", " CWE Flag Count",
    " ECE Flag Count", " Down/Up Ratio", " Average Packet Size", " Avg Fwd Segment Size",
    " Avg Bwd Segment Size", " Fwd Header Length.1", "Fwd Avg Bytes/Bulk",
    " Fwd Avg Packets/Bulk", " Fwd Avg Bulk Rate", " Bwd Avg Bytes/Bulk",
    " Bwd Avg Packets/Bulk", "Bwd Avg Bulk Rate", "Subflow Fwd Packets",
    " Subflow Fwd Bytes", " Subflow Bwd Packets", " Subflow Bwd Bytes",
    "Init_Win_bytes_forward", " Init_Win_bytes_backward", " act_data_pkt_fwd",
    " min_seg_size_forward", "Active Mean", " Active Std", " Active Max", " Active Min",
    "Idle Mean", " Idle Std", " Idle Max", " Idle Min", " Label"]


def row2018(seed, label, overrides=None):
    vals = []
    for j, col in enumerate(CIC2018):
        if col == "Label":
            vals.append(label)
        elif col == "Timestamp":
            vals.append("16/02/2018 01:0%d:00" % (seed % 10))
        elif col == "Dst Port":
            vals.append(str(80 + seed))
        elif col == "Protocol":
            vals.append("6")
        else:
            vals.append(repr(round(seed * 10 + j * 0.5, 3)))
    for k, v in (overrides or {}).items():
        vals[CIC2018.index(k)] = v
    return vals


def write(name, header, rows):
    with open(OUT / name, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write("cic2018_three_rows.csv", CIC2018,
          [row2018(1, "Benign"), row2018(2, "DoS attacks-Hulk"), row2018(3, "Benign")])
    write("cic2018_non_finite.csv", CIC2018,
          [row2018(1, "Benign"),
           row2018(2, "Benign", {"Flow Duration": "Infinity"}),
           row2018(3, "Bot"),
           # Non-finite values in dropped columns do not matter.
           row2018(4, "Benign", {"Flow Byts/s": "Infinity", "Flow Pkts/s": "NaN"}),
           row2018(5, "Benign", {"Fwd IAT Tot": "abc"})])
    labels2017 = ["BENIGN", "DDoS", "BENIGN", "PortScan"]
    rows = []
    for i, lab in enumerate(labels2017):
        r = ["10.0.0.%d-1" % i, "10.0.0.%d" % i, str(4000 + i), "192.168.1.1"]
        src = row2018(i + 1, lab)
        # Map 2018 order onto 2017 order: same feature sequence, plus the
        # duplicated Fwd Header Length column.
        for col in CIC2018:
            if col == "Bwd Seg Size Avg":
                r.append(src[CIC2018.index(col)])
                r.append(src[CIC2018.index("Fwd Header Len")])
            else:
                r.append(src[CIC2018.index(col)])
        rows.append(r)
    write("cic2017_traffic_labelling.csv", CIC2017, rows)
    write("unlabeled_benign.csv", CIC2018[:-1],
          [row2018(i, "")[:-1] for i in range(1, 6)])
    missing = [c for c in CIC2018 if c != "Flow IAT Std"]
    write("missing_column.csv", missing,
          [[v for c, v in zip(CIC2018, row2018(1, "Benign")) if c != "Flow IAT Std"]])
    (OUT / "empty.csv").write_text("")


if __name__ == "__main__":
    main()
