"""Small frozen problem instances and values computed once with ``oracles``."""

PTS6 = [[0.94, 1.457, 0.608], [1.775, 0.82, 1.433], [0.53, 0.49, 1.625],
        [0.997, 0.832, 1.456], [1.926, 0.619, 1.408], [1.039, 1.463, 1.999]]
W6 = [[0.246, 0.765], [0.495, 0.724], [0.878, 0.191], [0.252, 0.441], [0.106, 0.382], [0.446, 0.168]]
G6 = [[0.756, 0.775], [0.421, 0.378], [0.241, 0.455], [0.351, 0.253], [0.874, 0.268], [0.088, 0.264]]
# rbf radius 1, lam 1
OBJECTIVE6 = 16.404782471557596

PTS5 = [[0.039, 1.731, 1.688], [0.638, 1.921, 1.609], [0.842, 0.224, 1.703],
        [1.213, 0.461, 1.99], [0.731, 0.406, 0.987]]
W5 = [[0.845, 0.184], [0.418, 0.37], [0.943, 0.999], [0.492, 0.211], [0.711, 0.868]]
G5 = [[0.365, 0.247], [0.702, 0.143], [0.851, 0.054], [0.193, 0.719], [0.383, 0.127]]

# first two rows of one update step on the 5x5 instance, rbf radius 1, eps 1e-10
STEP5 = {
    (0.0, "w"): [[0.54972854990939, 0.11984716967564671], [0.28204310414265443, 0.2449602664949388]],
    (0.0, "g"): [[0.309166451780645, 0.17934367792450298], [0.46673195436701925, 0.08467152801911253]],
    (0.5, "w"): [[0.4640268586682437, 0.09633282796045003], [0.23955734576627105, 0.198248881479321]],
    (0.5, "g"): [[0.33931095163836894, 0.20190584409302273], [0.6371286928318991, 0.11950884628408333]],
}

LINEAR_PTS = [[1, 2, 0], [0, 1, 3], [2, 2, 2]]
LINEAR_GRAM = [[5, 2, 6], [2, 10, 8], [6, 8, 12]]

# nmi([0, 0, 1, 1], [0, 1, 1, 1]) with max-entropy normalisation
NMI_FIXTURE = 0.31127812445913283
