class Board {
  var cells: seq<int>
  var size: nat

  constructor Init()
    ensures size == 9
    ensures |cells| == 81
    ensures forall i :: 0 <= i < |cells| ==> cells[i] == 0
  {
    size := 9;
    cells := seq(81, _ => 0);
  }

  method Count(v: int) returns (c: nat)
    requires 0 <= v <= 9
    ensures c <= |cells|
  {
    c := 0;
    var i := 0;
    while i < |cells|
      invariant 0 <= i <= |cells|
      invariant c <= i
    {
      if cells[i] == v { c := c + 1; }
      i := i + 1;
    }
  }
}
